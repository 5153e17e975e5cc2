"""Identity-based signatures on the shared pairing group.

Certifies per-identity public values without a certificate chain: the
authority derives a signing key for an identity string, and anyone can
verify a signature knowing only the authority's public parameters and
the identity.  The construction is the classic pairing-based one:

    key for ID:    sk = H1(ID)^s          (s = master secret)
    sign:          r  = e(H1(ID), g)^k
                   v  = H2(msg || r)
                   u  = sk^v * H1(ID)^k
    verify:        r' = e(u, g) * e(H1(ID), master_pub)^(-v)
                   accept iff v == H2(msg || r')

The nonce k is derived deterministically from (sk, ID, msg), so signing
needs no randomness source and repeated signing is reproducible.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from typing import Tuple

from .groups import (
    EncodingError,
    G1Element,
    G2Element,
    Group,
    HashSuite,
    Scalar,
    length_prefixed,
)

_NONCE_TAG = b"O2DI-IBS-K\x00"


@dataclass(frozen=True)
class IbsParams:
    group: Group
    suite: HashSuite
    master_pub: G1Element


@dataclass(frozen=True)
class IbsMasterKey:
    s: Scalar


@dataclass(frozen=True)
class IbsSecretKey:
    point: G1Element  # H1(ID)^s
    commit_base: G2Element  # e(H1(ID), g), cached for signing


@dataclass(frozen=True)
class IbsSignature:
    u: G1Element
    v: Scalar


def ibs_gen(group: Group, rng=None) -> Tuple[IbsParams, IbsMasterKey]:
    s = group.random_nonzero_scalar(rng)
    params = IbsParams(group, HashSuite(group, namespace=b"O2DI-IBS"), group.g1_exp(group.g, s))
    return params, IbsMasterKey(s)


def ibs_keygen(params: IbsParams, msk: IbsMasterKey, identity: bytes) -> IbsSecretKey:
    grp = params.group
    h_id = params.suite.hash_to_g1(identity)
    return IbsSecretKey(grp.g1_exp(h_id, msk.s), grp.pairing(h_id, grp.g))


def ibs_sign(params: IbsParams, sk: IbsSecretKey, identity: bytes, msg: bytes) -> IbsSignature:
    grp = params.group
    k = _nonce(params, sk, identity, msg)
    r = grp.g2_exp(sk.commit_base, k)
    v = params.suite.hash_to_scalar(length_prefixed(msg) + grp.g2_encode(r))
    h_id = params.suite.hash_to_g1(identity)
    u = grp.g1_mul(grp.g1_exp(sk.point, v), grp.g1_exp(h_id, k))
    return IbsSignature(u, v)


def ibs_verify(params: IbsParams, sig: IbsSignature, identity: bytes, msg: bytes) -> bool:
    grp = params.group
    if sig.u is not None and not grp.g1_is_valid(sig.u):
        return False
    if not 0 <= sig.v < grp.q:
        return False
    h_id = params.suite.hash_to_g1(identity)
    r = grp.g2_mul(
        grp.pairing(sig.u, grp.g),
        grp.g2_inv(grp.g2_exp(grp.pairing(h_id, params.master_pub), sig.v)),
    )
    return sig.v == params.suite.hash_to_scalar(length_prefixed(msg) + grp.g2_encode(r))


def _nonce(params: IbsParams, sk: IbsSecretKey, identity: bytes, msg: bytes) -> Scalar:
    grp = params.group
    material = (
        _NONCE_TAG
        + grp.g1_encode(sk.point)
        + length_prefixed(identity)
        + length_prefixed(msg)
    )
    wide = hashlib.shake_256(material).digest(grp.scalar_size + 16)
    return int.from_bytes(wide, "big") % grp.q


def encode_signature(group: Group, sig: IbsSignature) -> bytes:
    """u then v, each length-prefixed."""
    return length_prefixed(group.g1_encode(sig.u)) + length_prefixed(
        group.scalar_encode(sig.v)
    )


def decode_signature(group: Group, data: bytes) -> IbsSignature:
    u_bytes, rest = _take(data)
    v_bytes, rest = _take(rest)
    if rest:
        raise EncodingError("trailing bytes after signature")
    return IbsSignature(group.g1_decode(u_bytes), group.scalar_decode(v_bytes))


def verify_encoded(params: IbsParams, sig_bytes: bytes, identity: bytes, msg: bytes) -> bool:
    """Verification on wire bytes; malformed encodings count as invalid."""
    try:
        sig = decode_signature(params.group, sig_bytes)
    except EncodingError:
        return False
    return ibs_verify(params, sig, identity, msg)


def _take(data: bytes) -> Tuple[bytes, bytes]:
    if len(data) < 2:
        raise EncodingError("truncated length prefix")
    ln = int.from_bytes(data[:2], "big")
    if len(data) < 2 + ln:
        raise EncodingError("truncated field")
    return data[2 : 2 + ln], data[2 + ln :]
