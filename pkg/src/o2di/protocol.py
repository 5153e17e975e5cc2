"""Vendor-side orchestration of audits, localization and repair.

The Vendor owns the keys, the manifest and a transport to every attached
edge server.  After caching, the manifest keeps only identifiers and
digests: no file content, no tag vectors, so vendor storage does not grow
with data size.  All traffic crosses the wire codec even though servers
live in-process; the byte counts in audit reports are therefore real
frame sizes.

Audit methods:
    1  one file, one server         fresh challenge, single proof
    2  many files, one server       PRF key k~ aggregates server-side
    3  one file, many servers       precomputed challenge pool, N proofs
    4  many files, many servers     both of the above at once

A failed audit retains its challenge secrets; localization replays them
as per-replica trapdoors so each server can report exactly which of its
replicas broke the equation.  Repair then copies content from a healthy
holder and re-tags it for the destination replica id.
"""

from __future__ import annotations

import random
import time
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Set, Tuple

from . import blockcodec, core, wire
from .fleet import EdgeServer, RepairError, UnknownReplicaError
from .groups import Scalar

_SYSTEM_RNG = random.SystemRandom()


class ProtocolError(Exception):
    """Audit or repair could not be carried out as requested."""


# ---------------------------------------------------------------------------
# manifest
# ---------------------------------------------------------------------------


@dataclass
class FileRecord:
    file_id: str
    digest: bytes
    replicas: Dict[int, bytes] = field(default_factory=dict)  # server -> replica id


@dataclass
class Manifest:
    """Everything the vendor remembers about cached data: ids and digests."""

    files: Dict[str, FileRecord] = field(default_factory=dict)
    audit_history: List[dict] = field(default_factory=list)

    def record(self, file_id: str) -> FileRecord:
        try:
            return self.files[file_id]
        except KeyError:
            raise ProtocolError(f"unknown file id {file_id!r}") from None

    def replica_of(self, file_id: str, server: int) -> bytes:
        rec = self.record(file_id)
        try:
            return rec.replicas[server]
        except KeyError:
            raise ProtocolError(
                f"file {file_id!r} has no replica on server {server}"
            ) from None


# ---------------------------------------------------------------------------
# audit reports
# ---------------------------------------------------------------------------


@dataclass
class ServerChallengeState:
    c1: object
    c2: object
    k: Scalar
    replica_ids: Dict[str, bytes]  # file id -> replica id on this server


@dataclass
class ChallengeContext:
    """Secret challenge material retained for localization."""

    coeffs: Tuple[Tuple[int, Scalar], ...]
    servers: Dict[int, ServerChallengeState]
    k_tilde: Optional[Scalar] = None


@dataclass
class AuditReport:
    method: int
    file_ids: Tuple[str, ...]
    servers: Tuple[int, ...]
    verdict: bool
    cause: str = ""
    localization: str = "none"  # none | pending | ran
    per_server_corrupted: Optional[Dict[int, Tuple[str, ...]]] = None
    timings: Dict[str, float] = field(default_factory=dict)
    bytes_sent: int = 0
    bytes_received: int = 0
    challenge_core_bytes: int = 0
    ctx: Optional[ChallengeContext] = None

    def summary(self) -> dict:
        """JSON-able record without the secret challenge material."""
        return {
            "record": "audit",
            "method": self.method,
            "files": list(self.file_ids),
            "servers": list(self.servers),
            "verdict": int(self.verdict),
            "cause": self.cause,
            "localization": self.localization,
            "corrupted": {
                str(j): list(v) for j, v in (self.per_server_corrupted or {}).items()
            },
            "bytes_sent": self.bytes_sent,
            "bytes_received": self.bytes_received,
            "timings_ms": {k: round(v * 1000.0, 3) for k, v in self.timings.items()},
        }


@dataclass(frozen=True)
class RepairEntry:
    dest_server: int
    file_id: str
    src_server: int


@dataclass
class RepairPlan:
    entries: List[RepairEntry] = field(default_factory=list)
    unrecoverable: List[Tuple[int, str]] = field(default_factory=list)


# ---------------------------------------------------------------------------
# server endpoint: frames in, frames out
# ---------------------------------------------------------------------------


class ServerEndpoint:
    """Message handler in front of one EdgeServer."""

    def __init__(self, server: EdgeServer):
        self.server = server

    def handle_frame(self, frame: bytes) -> bytes:
        group = self.server.params.group
        try:
            msg = wire.decode_message(group, frame)
        except wire.WireError as exc:
            reply = wire.ErrorMsg(wire.ERR_BAD_REQUEST, str(exc))
            return wire.encode_message(group, reply)[0]
        reply = self._dispatch(msg)
        return wire.encode_message(group, reply)[0]

    def _dispatch(self, msg: wire.Message) -> wire.Message:
        server = self.server
        try:
            if isinstance(msg, (wire.Challenge1Msg, wire.Challenge3Msg)):
                proof = server.respond_method1(msg.replica_id, msg.chal)
                return wire.ProofMsg(proof)
            if isinstance(msg, (wire.Challenge2Msg, wire.Challenge4Msg)):
                proof = server.respond_method2(msg.replica_ids, msg.chal, msg.k_tilde)
                return wire.ProofMsg(proof)
            if isinstance(msg, wire.TrapdoorMsg):
                if server.last_challenge is None:
                    return wire.ErrorMsg(
                        wire.ERR_NO_CHALLENGE_CONTEXT, "no audited challenge to replay"
                    )
                trap = core.Trapdoor(dict(msg.entries))
                ids = [rid for rid, _ in msg.entries]
                bad = server.run_find_corrupted(ids, server.last_challenge, trap)
                return wire.CorruptSetMsg(tuple(sorted(bad)))
            if isinstance(msg, wire.RepairMsg):
                tag = core.OnlineTag(msg.replica_id, msg.tag_values)
                server.apply_repair(msg.replica_id, msg.blocks, tag)
                return wire.AckMsg()
            if isinstance(msg, wire.FetchMsg):
                blocks, _ = server.fetch(msg.replica_id)
                return wire.ContentMsg(blocks)
        except UnknownReplicaError as exc:
            return wire.ErrorMsg(wire.ERR_UNKNOWN_REPLICA, str(exc))
        except core.InconsistentChallengeError as exc:
            return wire.ErrorMsg(wire.ERR_BAD_CHALLENGE, str(exc))
        except (RepairError, ValueError) as exc:
            return wire.ErrorMsg(wire.ERR_BAD_REQUEST, str(exc))
        return wire.ErrorMsg(wire.ERR_BAD_REQUEST, f"unexpected {type(msg).__name__}")


class _Traffic:
    """Per-audit byte accounting across one or more exchanges."""

    def __init__(self):
        self.sent = 0
        self.received = 0
        self.challenge_core = 0


# ---------------------------------------------------------------------------
# the vendor
# ---------------------------------------------------------------------------


class Vendor:
    def __init__(
        self,
        params: core.PublicParams,
        sk_v: core.VendorSecretKey,
        pk_v: core.VendorPublicKey,
        otag: core.OfflineTag,
        rng: Optional[random.Random] = None,
        num_challenged: Optional[int] = None,
        pool_size: int = 64,
        subset_size: int = core.DEFAULT_SUBSET_SIZE,
        strict_pool: bool = False,
    ):
        self.params = params
        self.sk_v = sk_v
        self.pk_v = pk_v
        self.otag = otag
        self.rng = rng or _SYSTEM_RNG
        self.num_challenged = num_challenged
        self.pool_size = pool_size
        self.subset_size = subset_size
        self.strict_pool = strict_pool
        self.pool: Optional[core.PreChallengePool] = None
        self.manifest = Manifest()
        self.endpoints: Dict[int, ServerEndpoint] = {}

    # -- fleet wiring -------------------------------------------------------

    def attach_server(self, server: EdgeServer) -> None:
        self.endpoints[server.index] = ServerEndpoint(server)

    def attach_fleet(self, servers: Sequence[EdgeServer]) -> None:
        for server in servers:
            self.attach_server(server)

    def server_indices(self) -> List[int]:
        return sorted(self.endpoints)

    # -- caching --------------------------------------------------------------

    def cache_file(
        self,
        data: bytes,
        servers: Optional[Sequence[int]] = None,
        file_id: Optional[str] = None,
    ) -> List[str]:
        """Encode, replicate, tag and cache; afterwards the vendor holds only
        manifest records.  Returns the logical file ids (several if the data
        needed splitting)."""
        targets = sorted(servers) if servers else self.server_indices()
        if not targets:
            raise ProtocolError("no servers attached")
        for j in targets:
            if j not in self.endpoints:
                raise ProtocolError(f"server {j} not attached")
        parts = blockcodec.split_into_files(data, self.params.group, self.params.ell)
        ids = []
        for part_no, part in enumerate(parts):
            fid = file_id or part.digest.hex()[:16]
            if len(parts) > 1:
                fid = f"{fid}.p{part_no}"
            if fid in self.manifest.files:
                raise ProtocolError(f"file id {fid!r} already cached")
            rec = FileRecord(fid, part.digest)
            replicas = blockcodec.make_replicas(
                part, len(targets), self.rng if isinstance(self.rng, random.Random) else None
            )
            for j, replica in zip(targets, replicas):
                tag = core.online_tag(
                    self.params, replica.replica_id, self.otag, part.blocks, self.sk_v
                )
                self.endpoints[j].server.cache(replica.replica_id, part.blocks, tag)
                rec.replicas[j] = replica.replica_id
            self.manifest.files[fid] = rec
            ids.append(fid)
        return ids

    # -- transport ---------------------------------------------------------------

    def _exchange(self, server: int, msg: wire.Message, traffic: _Traffic) -> wire.Message:
        group = self.params.group
        frame, core_size = wire.encode_message(group, msg)
        traffic.sent += len(frame)
        traffic.challenge_core += core_size
        reply_frame = self.endpoints[server].handle_frame(frame)
        traffic.received += len(reply_frame)
        return wire.decode_message(group, reply_frame)

    # -- audits ---------------------------------------------------------------------

    def _coeff_count(self, full_coverage: bool) -> int:
        if full_coverage:
            return self.params.ell
        if self.num_challenged is not None:
            return min(self.num_challenged, self.params.ell)
        return min(core.DEFAULT_CHALLENGED_BLOCKS, self.params.ell)

    def _finish(self, report: AuditReport) -> AuditReport:
        if not report.verdict:
            report.localization = "pending"
        self.manifest.audit_history.append(report.summary())
        return report

    def audit_method1(
        self, file_id: str, server: int, full_coverage: bool = False
    ) -> AuditReport:
        rid = self.manifest.replica_of(file_id, server)
        traffic = _Traffic()
        t0 = time.perf_counter()
        chal, k = core.challgen1(
            self.params, self.pk_v, self._coeff_count(full_coverage), self.rng
        )
        t1 = time.perf_counter()
        reply = self._exchange(server, wire.Challenge1Msg(chal, rid), traffic)
        t2 = time.perf_counter()
        ctx = ChallengeContext(
            chal.coeffs, {server: ServerChallengeState(chal.c1, chal.c2, k, {file_id: rid})}
        )
        report = AuditReport(
            1, (file_id,), (server,), False, ctx=ctx,
            bytes_sent=traffic.sent, bytes_received=traffic.received,
            challenge_core_bytes=traffic.challenge_core,
        )
        if isinstance(reply, wire.ErrorMsg):
            report.cause = f"transport: {reply.detail}"
        else:
            report.verdict = core.check_proof1(self.params, self.otag, chal, k, reply.proof, rid)
            if not report.verdict:
                report.cause = "verification failed"
        t3 = time.perf_counter()
        report.timings = {"challenge": t1 - t0, "respond": t2 - t1, "verify": t3 - t2}
        return self._finish(report)

    def audit_method2(
        self, file_ids: Sequence[str], server: int, full_coverage: bool = False
    ) -> AuditReport:
        if len(file_ids) <= 1:
            raise ProtocolError("method 2 needs several files; use method 1 for a single one")
        rids = {fid: self.manifest.replica_of(fid, server) for fid in file_ids}
        traffic = _Traffic()
        t0 = time.perf_counter()
        chal, k = core.challgen1(
            self.params, self.pk_v, self._coeff_count(full_coverage), self.rng
        )
        k_tilde = self.params.group.random_nonzero_scalar(self.rng)
        t1 = time.perf_counter()
        ordered = tuple(rids[fid] for fid in file_ids)
        reply = self._exchange(server, wire.Challenge2Msg(chal, k_tilde, ordered), traffic)
        t2 = time.perf_counter()
        ctx = ChallengeContext(
            chal.coeffs,
            {server: ServerChallengeState(chal.c1, chal.c2, k, dict(rids))},
            k_tilde=k_tilde,
        )
        report = AuditReport(
            2, tuple(file_ids), (server,), False, ctx=ctx,
            bytes_sent=traffic.sent, bytes_received=traffic.received,
            challenge_core_bytes=traffic.challenge_core,
        )
        if isinstance(reply, wire.ErrorMsg):
            report.cause = f"transport: {reply.detail}"
        else:
            report.verdict = core.check_proof2(
                self.params, self.otag, chal, k, k_tilde, reply.proof, ordered
            )
            if not report.verdict:
                report.cause = "verification failed"
        t3 = time.perf_counter()
        report.timings = {"challenge": t1 - t0, "respond": t2 - t1, "verify": t3 - t2}
        return self._finish(report)

    def refill_pool(self, size: Optional[int] = None) -> None:
        self.pool = core.offline_challenge(
            self.params, size or self.pool_size, self.pk_v, self.rng,
            one_time=self.strict_pool,
        )

    def _ensure_pool(self, n_servers: int) -> None:
        needed = n_servers * min(self.subset_size, self.pool_size)
        if self.pool is None:
            self.refill_pool(max(self.pool_size, needed))

    def audit_method3(
        self, file_id: str, servers: Sequence[int], full_coverage: bool = False
    ) -> AuditReport:
        if len(servers) <= 1:
            raise ProtocolError("method 3 needs several servers; use method 1 for one")
        servers = sorted(servers)
        rids = {j: self.manifest.replica_of(file_id, j) for j in servers}
        self._ensure_pool(len(servers))
        traffic = _Traffic()
        t0 = time.perf_counter()
        agg = core.challgen2(
            self.params, self.pool, len(servers),
            self._coeff_count(full_coverage), self.subset_size, self.rng,
        )
        t1 = time.perf_counter()
        proofs: List[Optional[core.Proof]] = []
        transport_failures = []
        for pos, j in enumerate(servers):
            reply = self._exchange(
                j, wire.Challenge3Msg(agg.challenge_for(pos), rids[j]), traffic
            )
            if isinstance(reply, wire.ErrorMsg):
                proofs.append(None)
                transport_failures.append(f"server {j}: {reply.detail}")
            else:
                proofs.append(reply.proof)
        t2 = time.perf_counter()
        ctx = ChallengeContext(
            agg.coeffs,
            {
                j: ServerChallengeState(*agg.pairs[pos], agg.secrets[pos], {file_id: rids[j]})
                for pos, j in enumerate(servers)
            },
        )
        report = AuditReport(
            3, (file_id,), tuple(servers), False, ctx=ctx,
            bytes_sent=traffic.sent, bytes_received=traffic.received,
            challenge_core_bytes=traffic.challenge_core,
        )
        if transport_failures:
            report.cause = "transport: " + "; ".join(transport_failures)
        else:
            report.verdict = core.check_proof3(
                self.params, self.otag, agg, proofs, [rids[j] for j in servers]
            )
            if not report.verdict:
                report.cause = "verification failed"
        t3 = time.perf_counter()
        report.timings = {"challenge": t1 - t0, "respond": t2 - t1, "verify": t3 - t2}
        return self._finish(report)

    def audit_method4(
        self, file_ids: Sequence[str], servers: Sequence[int], full_coverage: bool = False
    ) -> AuditReport:
        if len(file_ids) <= 1:
            raise ProtocolError("method 4 needs several files; see methods 1 and 3")
        if len(servers) <= 1:
            raise ProtocolError("method 4 needs several servers; see methods 1 and 2")
        servers = sorted(servers)
        per_server = {
            j: {fid: self.manifest.replica_of(fid, j) for fid in file_ids} for j in servers
        }
        self._ensure_pool(len(servers))
        traffic = _Traffic()
        t0 = time.perf_counter()
        agg = core.challgen2(
            self.params, self.pool, len(servers),
            self._coeff_count(full_coverage), self.subset_size, self.rng,
        )
        k_tilde = self.params.group.random_nonzero_scalar(self.rng)
        t1 = time.perf_counter()
        proofs: List[Optional[core.Proof]] = []
        transport_failures = []
        ordered_ids = {j: tuple(per_server[j][fid] for fid in file_ids) for j in servers}
        for pos, j in enumerate(servers):
            reply = self._exchange(
                j,
                wire.Challenge4Msg(agg.challenge_for(pos), k_tilde, ordered_ids[j]),
                traffic,
            )
            if isinstance(reply, wire.ErrorMsg):
                proofs.append(None)
                transport_failures.append(f"server {j}: {reply.detail}")
            else:
                proofs.append(reply.proof)
        t2 = time.perf_counter()
        ctx = ChallengeContext(
            agg.coeffs,
            {
                j: ServerChallengeState(*agg.pairs[pos], agg.secrets[pos], dict(per_server[j]))
                for pos, j in enumerate(servers)
            },
            k_tilde=k_tilde,
        )
        report = AuditReport(
            4, tuple(file_ids), tuple(servers), False, ctx=ctx,
            bytes_sent=traffic.sent, bytes_received=traffic.received,
            challenge_core_bytes=traffic.challenge_core,
        )
        if transport_failures:
            report.cause = "transport: " + "; ".join(transport_failures)
        else:
            report.verdict = core.check_proof4(
                self.params, self.otag, agg, k_tilde, proofs,
                [ordered_ids[j] for j in servers],
            )
            if not report.verdict:
                report.cause = "verification failed"
        t3 = time.perf_counter()
        report.timings = {"challenge": t1 - t0, "respond": t2 - t1, "verify": t3 - t2}
        return self._finish(report)

    # -- localization ---------------------------------------------------------------

    def localize(self, report: AuditReport) -> Dict[int, Set[str]]:
        """Replay the failed audit's challenge as trapdoors; returns, per server,
        the set of file ids whose replica there is corrupted (or missing)."""
        if report.ctx is None:
            raise ProtocolError("report carries no challenge context")
        outcome: Dict[int, Set[str]] = {}
        traffic = _Traffic()
        for j, state in report.ctx.servers.items():
            chal = core.Challenge(state.c1, state.c2, report.ctx.coeffs)
            trap = core.loc_trap(
                self.params, state.replica_ids.values(), chal, state.k, self.otag.secret
            )
            entries = tuple(sorted(trap.traps.items()))
            reply = self._exchange(j, wire.TrapdoorMsg(entries), traffic)
            by_rid = {rid: fid for fid, rid in state.replica_ids.items()}
            if isinstance(reply, wire.CorruptSetMsg):
                outcome[j] = {by_rid[rid] for rid in reply.replica_ids if rid in by_rid}
            else:
                # unresponsive or confused server: everything it held is suspect
                outcome[j] = set(state.replica_ids)
        report.per_server_corrupted = {j: tuple(sorted(v)) for j, v in outcome.items()}
        report.localization = "ran"
        report.bytes_sent += traffic.sent
        report.bytes_received += traffic.received
        self.manifest.audit_history.append(
            {
                "record": "localize",
                "servers": sorted(outcome),
                "corrupted": {str(j): sorted(v) for j, v in outcome.items()},
            }
        )
        return outcome

    # -- repair -----------------------------------------------------------------------

    def plan_repair(self, corrupted: Dict[int, Set[str]]) -> RepairPlan:
        """Pick, for every corrupted replica, the lowest-indexed healthy holder."""
        plan = RepairPlan()
        for dest in sorted(corrupted):
            for fid in sorted(corrupted[dest]):
                rec = self.manifest.record(fid)
                healthy = [
                    j
                    for j in sorted(rec.replicas)
                    if j != dest and fid not in corrupted.get(j, set())
                ]
                if healthy:
                    plan.entries.append(RepairEntry(dest, fid, healthy[0]))
                else:
                    plan.unrecoverable.append((dest, fid))
        return plan

    def execute_repair(self, plan: RepairPlan) -> AuditReport:
        """Fetch intact content, re-tag it for the broken replica id, install,
        and prove the fix with a fresh full-coverage audit per entry."""
        repaired: List[Tuple[int, str]] = []
        failures: List[str] = []
        traffic = _Traffic()
        for entry in plan.entries:
            rec = self.manifest.record(entry.file_id)
            src_rid = rec.replicas[entry.src_server]
            dest_rid = rec.replicas[entry.dest_server]
            if entry.src_server == entry.dest_server:
                failures.append(f"{entry.file_id}: source equals destination")
                continue
            src_audit = self.audit_method1(entry.file_id, entry.src_server, full_coverage=True)
            if not src_audit.verdict:
                failures.append(
                    f"{entry.file_id}: source server {entry.src_server} failed its audit"
                )
                continue
            reply = self._exchange(entry.src_server, wire.FetchMsg(src_rid), traffic)
            if not isinstance(reply, wire.ContentMsg):
                failures.append(f"{entry.file_id}: fetch failed")
                continue
            blocks = reply.blocks
            try:
                data = blockcodec.decode_blocks(blocks, self.params.group)
            except blockcodec.BlockDecodeError:
                failures.append(f"{entry.file_id}: fetched content does not decode")
                continue
            if blockcodec.content_digest(data) != rec.digest:
                failures.append(f"{entry.file_id}: fetched content digest mismatch")
                continue
            fresh = core.online_tag(self.params, dest_rid, self.otag, blocks, self.sk_v)
            ack = self._exchange(
                entry.dest_server, wire.RepairMsg(dest_rid, blocks, fresh.t), traffic
            )
            if not isinstance(ack, wire.AckMsg):
                failures.append(f"{entry.file_id}: destination rejected the repair")
                continue
            check = self.audit_method1(entry.file_id, entry.dest_server, full_coverage=True)
            if check.verdict:
                repaired.append((entry.dest_server, entry.file_id))
            else:
                failures.append(f"{entry.file_id}: post-repair audit failed")
        report = AuditReport(
            1,
            tuple(sorted({e.file_id for e in plan.entries})),
            tuple(sorted({e.dest_server for e in plan.entries})),
            verdict=not failures and len(repaired) == len(plan.entries),
            cause="; ".join(failures) if failures else "repair cycle",
            bytes_sent=traffic.sent,
            bytes_received=traffic.received,
        )
        self.manifest.audit_history.append(
            {
                "record": "repair",
                "repaired": [[j, fid] for j, fid in repaired],
                "unrecoverable": [[j, fid] for j, fid in plan.unrecoverable],
                "failures": failures,
            }
        )
        return report

    # -- storage accounting -----------------------------------------------------------

    def storage_footprint(self) -> int:
        """Bytes the vendor must durably keep (keys + manifest)."""
        from . import serial

        return len(serial.vendor_state_bytes(self))
