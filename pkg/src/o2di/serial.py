"""Binary persistence for keys, parameters and the manifest.

Each blob starts with an 8-byte magic and a version byte; fields follow in
fixed order using the same primitives as the wire codec.  Group parameters
serialize as (sizes, n, q, generator seed); the generator itself is
re-derived deterministically on load, so a round-tripped group is
bit-identical to the original.
"""

from __future__ import annotations

import json
from typing import Tuple

from . import core, ibs, protocol
from .groups import Group, HashSuite
from .wire import Reader, Writer

MAGIC_PARAMS = b"O2DI-PRM"
MAGIC_MASTER = b"O2DI-MSK"
MAGIC_VENDOR_SK = b"O2DI-VSK"
MAGIC_VENDOR_PK = b"O2DI-VPK"
MAGIC_OFFTAG = b"O2DI-OFT"
MAGIC_MANIFEST = b"O2DI-MAN"
MAGIC_REPORT = b"O2DI-RPT"
VERSION = 1


class SerialError(ValueError):
    """Blob is not a valid serialized object of the expected kind."""


def _head(w: Writer, magic: bytes) -> None:
    w.raw(magic)
    w.u8(VERSION)


def _check_head(r: Reader, magic: bytes) -> None:
    if r.raw(8) != magic:
        raise SerialError(f"expected {magic!r} blob")
    version = r.u8()
    if version != VERSION:
        raise SerialError(f"unsupported version {version}")


# -- group ----------------------------------------------------------------------


def _put_group(w: Writer, group: Group) -> None:
    w.u16(group.security_bits)
    w.lp(int(group.n).to_bytes((group.nbits + 7) // 8, "big"))
    w.lp(int(group.q).to_bytes((group.qbits + 7) // 8, "big"))
    w.lp(group._g_seed)


def _get_group(r: Reader) -> Group:
    security_bits = r.u16()
    n = int.from_bytes(r.lp(), "big")
    q = int.from_bytes(r.lp(), "big")
    g_seed = r.lp()
    return Group(n, q, g_seed, security_bits)


def _put_ibs_signature(w: Writer, group: Group, sig: ibs.IbsSignature) -> None:
    w.raw(group.g1_encode(sig.u))
    w.raw(group.scalar_encode(sig.v))


def _get_ibs_signature(r: Reader, group: Group) -> ibs.IbsSignature:
    u = group.g1_decode(r.raw(group.g1_size))
    v = group.scalar_decode(r.raw(group.scalar_size))
    return ibs.IbsSignature(u, v)


def _put_ibs_secret(w: Writer, group: Group, sk: ibs.IbsSecretKey) -> None:
    w.raw(group.g1_encode(sk.point))
    w.raw(group.g2_encode(sk.commit_base))


def _get_ibs_secret(r: Reader, group: Group) -> ibs.IbsSecretKey:
    point = group.g1_decode(r.raw(group.g1_size))
    commit_base = group.g2_decode(r.raw(group.g2_size))
    return ibs.IbsSecretKey(point, commit_base)


# -- public parameters -------------------------------------------------------------


def encode_params(params: core.PublicParams) -> bytes:
    w = Writer()
    _head(w, MAGIC_PARAMS)
    _put_group(w, params.group)
    group = params.group
    w.raw(group.g1_encode(params.ibs_params.master_pub))
    w.lp(params.system_id)
    w.raw(group.g1_encode(params.pk))
    w.u32(params.ell)
    return w.getvalue()


def decode_params(data: bytes) -> core.PublicParams:
    r = Reader(data)
    _check_head(r, MAGIC_PARAMS)
    group = _get_group(r)
    master_pub = group.g1_decode(r.raw(group.g1_size))
    system_id = r.lp()
    pk = group.g1_decode(r.raw(group.g1_size))
    ell = r.u32()
    ibs_params = ibs.IbsParams(group, HashSuite(group, namespace=b"O2DI-IBS"), master_pub)
    return core.PublicParams(group, HashSuite(group), ibs_params, system_id, pk, ell)


# -- master secret ------------------------------------------------------------------


def encode_master(msk: core.MasterSecret, group: Group) -> bytes:
    w = Writer()
    _head(w, MAGIC_MASTER)
    _put_ibs_secret(w, group, msk.system_sk)
    w.raw(group.scalar_encode(msk.x))
    w.raw(group.scalar_encode(msk.ibs_msk.s))
    return w.getvalue()


def decode_master(data: bytes, group: Group) -> core.MasterSecret:
    r = Reader(data)
    _check_head(r, MAGIC_MASTER)
    system_sk = _get_ibs_secret(r, group)
    x = group.scalar_decode(r.raw(group.scalar_size))
    s = group.scalar_decode(r.raw(group.scalar_size))
    return core.MasterSecret(system_sk, x, ibs.IbsMasterKey(s))


# -- vendor keys ----------------------------------------------------------------------


def encode_vendor_sk(sk_v: core.VendorSecretKey, group: Group) -> bytes:
    w = Writer()
    _head(w, MAGIC_VENDOR_SK)
    w.raw(group.scalar_encode(sk_v.lam))
    _put_ibs_secret(w, group, sk_v.sk)
    return w.getvalue()


def decode_vendor_sk(data: bytes, group: Group) -> core.VendorSecretKey:
    r = Reader(data)
    _check_head(r, MAGIC_VENDOR_SK)
    lam = group.scalar_decode(r.raw(group.scalar_size))
    return core.VendorSecretKey(lam, _get_ibs_secret(r, group))


def encode_vendor_pk(pk_v: core.VendorPublicKey, group: Group) -> bytes:
    w = Writer()
    _head(w, MAGIC_VENDOR_PK)
    w.lp(pk_v.vendor_id)
    w.raw(group.g1_encode(pk_v.lam_pub))
    _put_ibs_signature(w, group, pk_v.cert)
    return w.getvalue()


def decode_vendor_pk(data: bytes, group: Group) -> core.VendorPublicKey:
    r = Reader(data)
    _check_head(r, MAGIC_VENDOR_PK)
    vendor_id = r.lp()
    lam_pub = group.g1_decode(r.raw(group.g1_size))
    cert = _get_ibs_signature(r, group)
    return core.VendorPublicKey(vendor_id, lam_pub, cert)


# -- offline tag -----------------------------------------------------------------------


def encode_offline_tag(otag: core.OfflineTag, group: Group) -> bytes:
    w = Writer()
    _head(w, MAGIC_OFFTAG)
    w.raw(group.g1_encode(otag.public.t1))
    _put_ibs_signature(w, group, otag.public.cert)
    w.lp(encode_vendor_pk(otag.public.pk, group))
    w.raw(group.g1_encode(otag.secret.t2))
    w.raw(group.scalar_encode(otag.secret.y))
    return w.getvalue()


def decode_offline_tag(data: bytes, group: Group) -> core.OfflineTag:
    r = Reader(data)
    _check_head(r, MAGIC_OFFTAG)
    t1 = group.g1_decode(r.raw(group.g1_size))
    cert = _get_ibs_signature(r, group)
    pk = decode_vendor_pk(r.lp(), group)
    t2 = group.g1_decode(r.raw(group.g1_size))
    y = group.scalar_decode(r.raw(group.scalar_size))
    return core.OfflineTag(
        core.PublicOfflineTag(t1, cert, pk), core.SecretOfflineTag(t2, y)
    )


# -- manifest ------------------------------------------------------------------------


def encode_manifest(manifest: protocol.Manifest) -> bytes:
    w = Writer()
    _head(w, MAGIC_MANIFEST)
    w.u32(len(manifest.files))
    for fid in sorted(manifest.files):
        rec = manifest.files[fid]
        w.lp(fid.encode())
        w.lp(rec.digest)
        w.u16(len(rec.replicas))
        for j in sorted(rec.replicas):
            w.u32(j)
            w.lp(rec.replicas[j])
    w.lp32(json.dumps(manifest.audit_history, sort_keys=True).encode())
    return w.getvalue()


def decode_manifest(data: bytes) -> protocol.Manifest:
    r = Reader(data)
    _check_head(r, MAGIC_MANIFEST)
    manifest = protocol.Manifest()
    for _ in range(r.u32()):
        fid = r.lp().decode()
        digest = r.lp()
        rec = protocol.FileRecord(fid, digest)
        for _ in range(r.u16()):
            j = r.u32()
            rec.replicas[j] = r.lp()
        manifest.files[fid] = rec
    manifest.audit_history = json.loads(r.lp32().decode())
    return manifest


# -- audit reports (with challenge secrets, for later localization) ------------------


def encode_report(report: protocol.AuditReport, group: Group) -> bytes:
    w = Writer()
    _head(w, MAGIC_REPORT)
    w.u8(report.method)
    w.u8(int(report.verdict))
    w.lp(report.cause.encode())
    w.lp(report.localization.encode())
    w.u16(len(report.file_ids))
    for fid in report.file_ids:
        w.lp(fid.encode())
    w.u16(len(report.servers))
    for j in report.servers:
        w.u32(j)
    corrupted = report.per_server_corrupted or {}
    w.u16(len(corrupted))
    for j in sorted(corrupted):
        w.u32(j)
        w.u16(len(corrupted[j]))
        for fid in corrupted[j]:
            w.lp(fid.encode())
    ctx = report.ctx
    w.u8(0 if ctx is None else 1)
    if ctx is not None:
        w.u32(len(ctx.coeffs))
        for i, v in ctx.coeffs:
            w.u64(i)
            w.raw(group.scalar_encode(v))
        w.u8(0 if ctx.k_tilde is None else 1)
        if ctx.k_tilde is not None:
            w.raw(group.scalar_encode(ctx.k_tilde))
        w.u16(len(ctx.servers))
        for j in sorted(ctx.servers):
            st = ctx.servers[j]
            w.u32(j)
            w.raw(group.g1_encode(st.c1))
            w.raw(group.g1_encode(st.c2))
            w.raw(group.scalar_encode(st.k))
            w.u16(len(st.replica_ids))
            for fid in sorted(st.replica_ids):
                w.lp(fid.encode())
                w.lp(st.replica_ids[fid])
    return w.getvalue()


def decode_report(data: bytes, group: Group) -> protocol.AuditReport:
    r = Reader(data)
    _check_head(r, MAGIC_REPORT)
    method = r.u8()
    verdict = bool(r.u8())
    cause = r.lp().decode()
    localization = r.lp().decode()
    file_ids = tuple(r.lp().decode() for _ in range(r.u16()))
    servers = tuple(r.u32() for _ in range(r.u16()))
    corrupted = {}
    for _ in range(r.u16()):
        j = r.u32()
        corrupted[j] = tuple(r.lp().decode() for _ in range(r.u16()))
    ctx = None
    if r.u8():
        coeffs = []
        for _ in range(r.u32()):
            i = r.u64()
            coeffs.append((i, group.scalar_decode(r.raw(group.scalar_size))))
        k_tilde = None
        if r.u8():
            k_tilde = group.scalar_decode(r.raw(group.scalar_size))
        states = {}
        for _ in range(r.u16()):
            j = r.u32()
            c1 = group.g1_decode(r.raw(group.g1_size))
            c2 = group.g1_decode(r.raw(group.g1_size))
            k = group.scalar_decode(r.raw(group.scalar_size))
            replica_ids = {}
            for _ in range(r.u16()):
                fid = r.lp().decode()
                replica_ids[fid] = r.lp()
            states[j] = protocol.ServerChallengeState(c1, c2, k, replica_ids)
        ctx = protocol.ChallengeContext(tuple(coeffs), states, k_tilde)
    return protocol.AuditReport(
        method,
        file_ids,
        servers,
        verdict,
        cause=cause,
        localization=localization,
        per_server_corrupted=corrupted or None,
        ctx=ctx,
    )


def vendor_state_bytes(vendor: protocol.Vendor) -> bytes:
    """Everything the vendor durably stores, concatenated: keys + manifest.
    Content bytes never appear here, which is the point."""
    group = vendor.params.group
    parts = [
        encode_params(vendor.params),
        encode_vendor_sk(vendor.sk_v, group),
        encode_vendor_pk(vendor.pk_v, group),
        encode_offline_tag(vendor.otag, group),
        encode_manifest(vendor.manifest),
    ]
    w = Writer()
    for part in parts:
        w.lp32(part)
    return w.getvalue()
