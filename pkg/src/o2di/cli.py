"""Operator command line: key lifecycle, caching, audits, repair, benchmarks.

State lives in two directories: the vendor root (key blobs, manifest, the
last audit's challenge record) and the fleet directory (one subdirectory
per simulated edge server).  A simple key=value config file can set the
defaults; flags override the config.

Machine-readable output (--json) is line-oriented: one JSON object per
record, schema documented in the README.
"""

from __future__ import annotations

import argparse
import json
import os
import random
import sys
import time
from pathlib import Path
from typing import Dict, List, Optional

from . import blockcodec, core, fleet, protocol, serial, wire
from .groups import count_ops, generate_group

DEFAULTS = {
    "vendor_root": "o2di-vendor",
    "fleet_dir": "o2di-fleet",
    "num_challenged": "100",
    "pool_size": "64",
    "subset_size": "16",
    "block_count": "256",
    "num_servers": "3",
    "security_bits": "80",
    "vendor_id": "vendor-1",
}

KEY_FILES = ("params.bin", "msk.bin", "vendor_sk.bin", "vendor_pk.bin", "offtag.bin")


class CliError(Exception):
    """User-facing command failure (bad arguments, missing state)."""


class BenchClaimError(Exception):
    """A measured size or operation count broke its expected value."""


def load_config(path: Optional[str]) -> Dict[str, str]:
    cfg = dict(DEFAULTS)
    if path:
        for line_no, line in enumerate(Path(path).read_text().splitlines(), 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise CliError(f"{path}:{line_no}: expected key=value")
            key, _, value = line.partition("=")
            cfg[key.strip()] = value.strip()
    return cfg


def _write_private(path: Path, data: bytes) -> None:
    path.write_bytes(data)
    os.chmod(path, 0o600)


def _emit(args, record: dict, human: str) -> None:
    if args.json:
        print(json.dumps(record, sort_keys=True))
    else:
        print(human)


# ---------------------------------------------------------------------------
# state loading
# ---------------------------------------------------------------------------


def _load_keys(root: Path):
    for name in KEY_FILES:
        if not (root / name).exists():
            raise CliError(f"missing {root / name}; run keygen first")
    params = serial.decode_params((root / "params.bin").read_bytes())
    group = params.group
    sk_v = serial.decode_vendor_sk((root / "vendor_sk.bin").read_bytes(), group)
    pk_v = serial.decode_vendor_pk((root / "vendor_pk.bin").read_bytes(), group)
    otag = serial.decode_offline_tag((root / "offtag.bin").read_bytes(), group)
    return params, sk_v, pk_v, otag


def _load_fleet(params, otag, fleet_dir: Path) -> List[fleet.EdgeServer]:
    if not fleet_dir.exists():
        raise CliError(f"fleet directory {fleet_dir} missing; run fleet-init first")
    servers = []
    for sub in sorted(fleet_dir.glob("server_*")):
        index = int(sub.name.split("_")[1])
        servers.append(fleet.EdgeServer(index, params, otag.public, sub))
    if not servers:
        raise CliError(f"no server_* directories under {fleet_dir}")
    return servers


def _load_vendor(args, cfg) -> protocol.Vendor:
    root = Path(cfg["vendor_root"])
    params, sk_v, pk_v, otag = _load_keys(root)
    rng = random.Random(args.seed) if args.seed is not None else None
    vendor = protocol.Vendor(
        params,
        sk_v,
        pk_v,
        otag,
        rng=rng,
        num_challenged=int(cfg["num_challenged"]),
        pool_size=int(cfg["pool_size"]),
        subset_size=int(cfg["subset_size"]),
    )
    manifest_path = root / "manifest.bin"
    if manifest_path.exists():
        vendor.manifest = serial.decode_manifest(manifest_path.read_bytes())
    vendor.attach_fleet(_load_fleet(params, otag, Path(cfg["fleet_dir"])))
    return vendor


def _save_manifest(vendor: protocol.Vendor, cfg) -> None:
    root = Path(cfg["vendor_root"])
    _write_private(root / "manifest.bin", serial.encode_manifest(vendor.manifest))


def _save_report(vendor, report, cfg) -> None:
    root = Path(cfg["vendor_root"])
    _write_private(
        root / "last_audit.bin", serial.encode_report(report, vendor.params.group)
    )


def _load_report(vendor, cfg) -> protocol.AuditReport:
    path = Path(cfg["vendor_root"]) / "last_audit.bin"
    if not path.exists():
        raise CliError("no recorded audit; run `o2di audit` first")
    return serial.decode_report(path.read_bytes(), vendor.params.group)


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def cmd_keygen(args, cfg) -> int:
    root = Path(cfg["vendor_root"])
    root.mkdir(parents=True, exist_ok=True)
    existing = [name for name in KEY_FILES if (root / name).exists()]
    if existing and not args.force:
        raise CliError(
            f"key files already exist in {root} ({', '.join(existing)}); use --force"
        )
    if args.seed is not None and not args.test_mode:
        raise CliError("seeded key generation requires --test-mode")
    rng = random.Random(args.seed) if args.test_mode and args.seed is not None else None
    group = generate_group(int(cfg["security_bits"]), seed=args.seed if rng else None)
    params, msk = core.setup(group, int(cfg["block_count"]), rng)
    sk_v, pk_v = core.extract(params, msk, cfg["vendor_id"].encode(), rng)
    otag = core.offline_tag(params, pk_v, sk_v, rng)
    _write_private(root / "params.bin", serial.encode_params(params))
    _write_private(root / "msk.bin", serial.encode_master(msk, group))
    _write_private(root / "vendor_sk.bin", serial.encode_vendor_sk(sk_v, group))
    _write_private(root / "vendor_pk.bin", serial.encode_vendor_pk(pk_v, group))
    _write_private(root / "offtag.bin", serial.encode_offline_tag(otag, group))
    ok = core.precheck(params, otag.public)
    _emit(
        args,
        {
            "record": "keygen",
            "vendor_root": str(root),
            "blocks": params.ell,
            "security_bits": group.security_bits,
            "precheck": int(ok),
        },
        f"keys written to {root} (blocks={params.ell}, precheck={'ok' if ok else 'FAILED'})",
    )
    return 0 if ok else 1


def cmd_fleet_init(args, cfg) -> int:
    fleet_dir = Path(cfg["fleet_dir"])
    count = args.servers if args.servers is not None else int(cfg["num_servers"])
    if count < 1:
        raise CliError("fleet needs at least one server")
    for j in range(1, count + 1):
        (fleet_dir / f"server_{j:03d}").mkdir(parents=True, exist_ok=True)
    _emit(
        args,
        {"record": "fleet-init", "fleet_dir": str(fleet_dir), "servers": count},
        f"initialized {count} servers under {fleet_dir}",
    )
    return 0


def cmd_tag(args, cfg) -> int:
    vendor = _load_vendor(args, cfg)
    data = Path(args.file).read_bytes()
    targets = vendor.server_indices()
    if args.servers is not None:
        if args.servers < 1:
            raise CliError("replica count must be at least 1")
        if args.servers > len(targets):
            raise CliError(f"fleet has only {len(targets)} servers")
        targets = targets[: args.servers]
    ids = vendor.cache_file(data, servers=targets, file_id=args.file_id)
    _save_manifest(vendor, cfg)
    _emit(
        args,
        {"record": "tag", "files": ids, "servers": targets, "bytes": len(data)},
        f"cached {len(data)} bytes as {', '.join(ids)} on servers {targets} "
        "(vendor retains ids and digests only)",
    )
    return 0


def _parse_scope(value: str, known: List[str]) -> List[str]:
    if value == "all":
        return list(known)
    chosen = [v.strip() for v in value.split(",") if v.strip()]
    for item in chosen:
        if item not in known:
            raise CliError(f"unknown id {item!r}")
    return chosen


def cmd_audit(args, cfg) -> int:
    vendor = _load_vendor(args, cfg)
    known_files = sorted(vendor.manifest.files)
    if not known_files:
        raise CliError("nothing cached yet")
    files = _parse_scope(args.files, known_files)
    all_servers = [str(j) for j in vendor.server_indices()]
    servers = [int(s) for s in _parse_scope(args.servers, all_servers)]
    method = args.method
    if method == 1:
        if len(files) != 1 or len(servers) != 1:
            raise CliError("method 1 audits one file on one server")
        report = vendor.audit_method1(files[0], servers[0], args.full_coverage)
    elif method == 2:
        if len(servers) != 1:
            raise CliError("method 2 audits several files on one server")
        report = vendor.audit_method2(files, servers[0], args.full_coverage)
    elif method == 3:
        if len(files) != 1:
            raise CliError("method 3 audits one file across several servers")
        report = vendor.audit_method3(files[0], servers, args.full_coverage)
    else:
        report = vendor.audit_method4(files, servers, args.full_coverage)
    _save_manifest(vendor, cfg)
    _save_report(vendor, report, cfg)
    human = (
        f"method {method} audit of {files} on servers {servers}: "
        f"{'PASS' if report.verdict else 'FAIL (' + report.cause + ')'}"
    )
    if not report.verdict:
        human += "\nrun `o2di localize` to find the corrupted replicas"
    _emit(args, report.summary(), human)
    return 0 if report.verdict else 1


def cmd_corrupt(args, cfg) -> int:
    vendor = _load_vendor(args, cfg)
    rid = vendor.manifest.replica_of(args.file, args.server)
    kind = fleet.FaultKind(args.kind)
    spec = fleet.FaultSpec(rid, kind, args.block, args.fault_seed)
    vendor.endpoints[args.server].server.inject_fault(spec)
    _emit(
        args,
        {
            "record": "corrupt",
            "server": args.server,
            "file": args.file,
            "kind": args.kind,
            "block": args.block,
            "seed": args.fault_seed,
        },
        f"injected {args.kind} into {args.file} on server {args.server}",
    )
    return 0


def cmd_localize(args, cfg) -> int:
    vendor = _load_vendor(args, cfg)
    report = _load_report(vendor, cfg)
    if report.verdict:
        raise CliError("last audit passed; nothing to localize")
    if report.ctx is None:
        raise CliError("last audit record has no challenge context")
    outcome = vendor.localize(report)
    _save_manifest(vendor, cfg)
    _save_report(vendor, report, cfg)
    record = {
        "record": "localize",
        "corrupted": {str(j): sorted(v) for j, v in outcome.items()},
    }
    lines = [
        f"server {j}: {', '.join(sorted(v)) if v else 'clean'}"
        for j, v in sorted(outcome.items())
    ]
    _emit(args, record, "\n".join(lines))
    return 0


def cmd_repair(args, cfg) -> int:
    vendor = _load_vendor(args, cfg)
    report = _load_report(vendor, cfg)
    if report.localization != "ran" or report.per_server_corrupted is None:
        raise CliError("no localization result; run `o2di localize` first")
    corrupted = {j: set(v) for j, v in report.per_server_corrupted.items()}
    plan = vendor.plan_repair(corrupted)
    result = vendor.execute_repair(plan)
    _save_manifest(vendor, cfg)
    record = {
        "record": "repair",
        "entries": [[e.dest_server, e.file_id, e.src_server] for e in plan.entries],
        "unrecoverable": [[j, fid] for j, fid in plan.unrecoverable],
        "verdict": int(result.verdict),
        "cause": result.cause,
    }
    human = (
        f"repaired {len(plan.entries)} replicas "
        f"({'all verified' if result.verdict else 'FAILURES: ' + result.cause})"
    )
    if plan.unrecoverable:
        human += "\nunrecoverable (no healthy holder): " + ", ".join(
            f"{fid}@server{j}" for j, fid in plan.unrecoverable
        )
    _emit(args, record, human)
    return 0 if result.verdict else 1


# ---------------------------------------------------------------------------
# bench
# ---------------------------------------------------------------------------


def _bench_one(group, ell: int, num_challenged: int, n_servers: int, rng) -> dict:
    params, msk = core.setup(group, ell, rng)
    sk_v, pk_v = core.extract(params, msk, b"bench-vendor", rng)

    t0 = time.perf_counter()
    otag = core.offline_tag(params, pk_v, sk_v, rng)
    t_offline = time.perf_counter() - t0

    payload = bytes(rng.getrandbits(8) for _ in range(min(blockcodec.capacity(group, ell), 4096)))
    data_file = blockcodec.encode_file(payload, group, ell)
    rid = b"bench-replica"

    with count_ops() as tag_ops:
        t0 = time.perf_counter()
        tag = core.online_tag(params, rid, otag, data_file.blocks, sk_v)
        t_online = time.perf_counter() - t0
    if tag_ops.scalar_muls != 2 * ell or tag_ops.hash_to_scalar_calls != ell:
        raise BenchClaimError("online tagging cost is off its 2l mults + l hashes budget")
    if tag_ops.g1_exps or tag_ops.g2_exps or tag_ops.pairings:
        raise BenchClaimError("online tagging performed group operations")

    t0 = time.perf_counter()
    chal, k = core.challgen1(params, pk_v, num_challenged, rng)
    t_chal1 = time.perf_counter() - t0

    pool = core.offline_challenge(params, max(16, n_servers * 4), pk_v, rng)
    with count_ops() as ch2_ops:
        t0 = time.perf_counter()
        core.challgen2(params, pool, n_servers, num_challenged, 4, rng)
        t_chal2 = time.perf_counter() - t0
    if ch2_ops.g1_exps or ch2_ops.g2_exps or ch2_ops.pairings:
        raise BenchClaimError("pool-based challenge generation exponentiated")

    t0 = time.perf_counter()
    proof = core.gen_proof(params, chal, tag, pk_v, data_file.blocks, pk_v.vendor_id)
    t_proof = time.perf_counter() - t0
    t0 = time.perf_counter()
    ok = core.check_proof1(params, otag, chal, k, proof, rid)
    t_verify = time.perf_counter() - t0
    if not ok:
        raise BenchClaimError("honest bench pipeline failed verification")

    # size claims, measured on real encodings
    tag_bytes = fleet.encode_tag_bytes(tag, group)
    tag_header = len(fleet.TAG_FILE_MAGIC) + 1 + 2 + len(rid) + 4
    tag_payload = len(tag_bytes) - tag_header
    if tag_payload != ell * group.scalar_size:
        raise BenchClaimError(f"tag payload {tag_payload} != ell*l_Zq")

    proof_frame, _ = wire.encode_message(group, wire.ProofMsg(proof))
    proof_payload = len(proof_frame) - wire.FRAME_HEADER_SIZE
    if proof_payload != 2 * group.g2_size:
        raise BenchClaimError(f"proof payload {proof_payload} != 2*l_G2")

    chal_frame, core_bytes = wire.encode_message(group, wire.Challenge1Msg(chal, rid))
    expected_core = wire.challenge_core_size(group, len(chal.coeffs))
    if core_bytes != expected_core:
        raise BenchClaimError(f"challenge core {core_bytes} != 2*l_G1 + |I|*(8+l_Zq)")

    return {
        "ell": ell,
        "challenged": num_challenged,
        "servers": n_servers,
        "offline_tag_ms": round(t_offline * 1000, 3),
        "online_tag_ms": round(t_online * 1000, 3),
        "challgen1_ms": round(t_chal1 * 1000, 3),
        "challgen2_ms": round(t_chal2 * 1000, 3),
        "gen_proof_ms": round(t_proof * 1000, 3),
        "verify_ms": round(t_verify * 1000, 3),
        "tag_payload": tag_payload,
        "proof_payload": proof_payload,
        "challenge_core": core_bytes,
        "online_scalar_muls": tag_ops.scalar_muls,
        "online_hashes": tag_ops.hash_to_scalar_calls,
        "online_group_ops": 0,
        "challgen2_exps": 0,
    }


def run_bench(
    security_bits: int,
    ell_list: List[int],
    i_list: List[int],
    n_list: List[int],
    seed: Optional[int] = None,
) -> List[dict]:
    rng = random.Random(seed if seed is not None else 0)
    group = generate_group(security_bits, seed=seed)
    rows = []
    for ell in ell_list:
        for num_challenged in i_list:
            if num_challenged > ell:
                continue
            for n_servers in n_list:
                rows.append(_bench_one(group, ell, num_challenged, n_servers, rng))
    if not rows:
        raise CliError("empty bench grid (every |I| exceeded ell?)")
    return rows


def cmd_bench(args, cfg) -> int:
    ell_list = [int(v) for v in args.ell_list.split(",")]
    i_list = [int(v) for v in args.i_list.split(",")]
    n_list = [int(v) for v in args.n_list.split(",")]
    rows = run_bench(int(cfg["security_bits"]), ell_list, i_list, n_list, args.seed)
    columns = list(rows[0])
    csv_lines = [",".join(columns)]
    csv_lines += [",".join(str(row[c]) for c in columns) for row in rows]
    csv_text = "\n".join(csv_lines) + "\n"
    if args.csv:
        Path(args.csv).write_text(csv_text)
    if args.json:
        for row in rows:
            print(json.dumps({"record": "bench", **row}, sort_keys=True))
    else:
        widths = [max(len(c), *(len(str(r[c])) for r in rows)) for c in columns]
        print("  ".join(c.ljust(w) for c, w in zip(columns, widths)))
        for row in rows:
            print("  ".join(str(row[c]).ljust(w) for c, w in zip(columns, widths)))
        print(
            f"\nall {len(rows)} configurations satisfied the size and "
            "operation-count claims"
        )
    return 0


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key=value config file")
    common.add_argument("--seed", type=int, help="deterministic randomness for this run")
    common.add_argument("--json", action="store_true", help="machine-readable output")

    parser = argparse.ArgumentParser(
        prog="o2di",
        description="Remote integrity inspection for replicated edge caches.",
        parents=[common],
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_parser(name, **kwargs):
        return sub.add_parser(name, parents=[common], **kwargs)

    p = add_parser("keygen", help="generate system and vendor keys")
    p.add_argument("--force", action="store_true", help="overwrite existing key files")
    p.add_argument(
        "--test-mode",
        action="store_true",
        help="allow --seed to derive key material (never for production keys)",
    )
    p.set_defaults(func=cmd_keygen)

    p = add_parser("fleet-init", help="create empty edge server directories")
    p.add_argument("--servers", type=int, help="number of servers")
    p.set_defaults(func=cmd_fleet_init)

    p = add_parser("tag", help="encode, replicate, tag and cache a file")
    p.add_argument("file", help="path of the file to cache")
    p.add_argument("--servers", type=int, help="replica count (default: whole fleet)")
    p.add_argument("--file-id", help="logical id (default: content digest prefix)")
    p.set_defaults(func=cmd_tag)

    p = add_parser("audit", help="run an integrity audit")
    p.add_argument("--method", type=int, required=True, choices=(1, 2, 3, 4))
    p.add_argument("--files", default="all", help="'all' or comma-separated file ids")
    p.add_argument("--servers", default="all", help="'all' or comma-separated indices")
    p.add_argument(
        "--full-coverage",
        action="store_true",
        help="challenge every block instead of sampling",
    )
    p.set_defaults(func=cmd_audit)

    p = add_parser("corrupt", help="inject a fault into a cached replica")
    p.add_argument("--server", type=int, required=True)
    p.add_argument("--file", required=True)
    p.add_argument(
        "--kind",
        required=True,
        choices=[k.value for k in fleet.FaultKind],
    )
    p.add_argument("--block", type=int, help="1-based block index")
    p.add_argument("--fault-seed", type=int, default=0)
    p.set_defaults(func=cmd_corrupt)

    p = add_parser("localize", help="find corrupted replicas after a failed audit")
    p.set_defaults(func=cmd_localize)

    p = add_parser("repair", help="repair replicas reported by localize")
    p.set_defaults(func=cmd_repair)

    p = add_parser("bench", help="measure costs and check size claims")
    p.add_argument("--ell-list", default="256,1024,4096")
    p.add_argument("--i-list", default="100,200,300,400")
    p.add_argument("--n-list", default="1,5,10")
    p.add_argument("--csv", help="write the table to this CSV file")
    p.set_defaults(func=cmd_bench)

    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = load_config(args.config)
        return args.func(args, cfg)
    except (CliError, protocol.ProtocolError, core.PoolExhaustedError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except BenchClaimError as exc:
        print(f"bench claim violated: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
