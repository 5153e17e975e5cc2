"""Simulated edge servers: replica storage, proof generation, fault injection.

Each EdgeServer owns a store mapping replica ids to (block vector, tag)
pairs.  Servers execute the prover-side algorithms against their own
store and never see any tag secrets.  A fault-injection interface mutates
stored entries deterministically for experiments; repair installs fresh
content and a fresh vendor-issued tag.

State can be persisted as one directory per server holding a pair of
files per replica: "<id>.blk" in the block container format and
"<id>.tag" in the tag container format below.
"""

from __future__ import annotations

import enum
import random
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Set, Tuple

from . import blockcodec, core
from .groups import Group, Scalar, length_prefixed

TAG_FILE_MAGIC = b"O2DI-TAG"
TAG_FILE_VERSION = 1


class DuplicateReplicaError(Exception):
    """A replica with this id is already cached on the server."""


class UnknownReplicaError(Exception):
    """The server holds no replica under the requested id."""


class RepairError(Exception):
    """Repair request cannot be satisfied."""


class FaultKind(enum.Enum):
    FLIP_BLOCK = "flip-block"
    ZERO_BLOCK = "zero-block"
    DROP_REPLICA = "drop-replica"
    TAMPER_TAG = "tamper-tag"


@dataclass(frozen=True)
class FaultSpec:
    """One reproducible mutation of one stored replica.

    block_index is 1-based and required for the block/tag kinds; the seed
    fixes the mutation exactly, so replaying a spec on identical state
    yields an identical outcome.
    """

    replica_id: bytes
    kind: FaultKind
    block_index: Optional[int] = None
    seed: int = 0


class EdgeServer:
    """Single edge server: indexed store of tagged replicas.

    Mutations go through cache / inject_fault / apply_repair only, and each
    instance is meant to be driven by one writer at a time; distinct
    servers are fully independent.
    """

    def __init__(
        self,
        index: int,
        params: core.PublicParams,
        poff: core.PublicOfflineTag,
        storage_dir: Optional[Path] = None,
    ):
        self.index = index
        self.params = params
        self.poff = poff
        self.store: Dict[bytes, Tuple[Tuple[Scalar, ...], core.OnlineTag]] = {}
        self.fault_log: List[FaultSpec] = []
        self.last_challenge: Optional[core.Challenge] = None
        self.storage_dir = Path(storage_dir) if storage_dir else None
        if self.storage_dir is not None:
            self.storage_dir.mkdir(parents=True, exist_ok=True)
            self._load_dir()

    # -- storage --------------------------------------------------------------

    def cache(
        self, replica_id: bytes, blocks: Sequence[Scalar], tag: core.OnlineTag
    ) -> None:
        if replica_id in self.store:
            raise DuplicateReplicaError(f"replica {replica_id.hex()} already cached")
        if tag.replica_id != replica_id:
            raise ValueError("tag is bound to a different replica id")
        if len(tag.t) != len(blocks):
            raise ValueError("tag length does not match block count")
        self.store[replica_id] = (tuple(blocks), tag)
        self._persist(replica_id)

    def fetch(self, replica_id: bytes) -> Tuple[Tuple[Scalar, ...], core.OnlineTag]:
        try:
            return self.store[replica_id]
        except KeyError:
            raise UnknownReplicaError(
                f"server {self.index} holds no replica {replica_id.hex()}"
            ) from None

    def holds(self, replica_id: bytes) -> bool:
        return replica_id in self.store

    # -- prover side ----------------------------------------------------------

    def respond_method1(self, replica_id: bytes, chal: core.Challenge) -> core.Proof:
        self.last_challenge = chal  # kept even on failure, for localization
        blocks, tag = self.fetch(replica_id)
        return core.gen_proof(
            self.params, chal, tag, self.poff.pk, blocks, self.poff.pk.vendor_id
        )

    def respond_method2(
        self, replica_ids: Sequence[bytes], chal: core.Challenge, k_tilde: Scalar
    ) -> core.Proof:
        self.last_challenge = chal
        pairs = [self.fetch(rid) for rid in replica_ids]
        agg_blocks, agg_tag = core.agg_data(
            self.params, k_tilde, [tag for _, tag in pairs], [blocks for blocks, _ in pairs]
        )
        return core.gen_proof(
            self.params, chal, agg_tag, self.poff.pk, agg_blocks, self.poff.pk.vendor_id
        )

    def run_find_corrupted(
        self, replica_ids: Sequence[bytes], chal: core.Challenge, trap: core.Trapdoor
    ) -> Set[bytes]:
        """Locate corrupted replicas; dropped replicas count as corrupted."""
        present_tags = []
        present_blocks = []
        missing = set()
        for rid in replica_ids:
            if rid in self.store:
                blocks, tag = self.store[rid]
                present_blocks.append(blocks)
                present_tags.append(tag)
            else:
                missing.add(rid)
        bad = core.find_corrupted(
            self.params, self.poff, present_tags, present_blocks, chal, trap
        )
        return bad | missing

    # -- fault injection --------------------------------------------------------

    def inject_fault(self, spec: FaultSpec) -> None:
        rng = random.Random(spec.seed)
        if spec.kind is FaultKind.DROP_REPLICA:
            if spec.replica_id not in self.store:
                raise UnknownReplicaError("cannot drop an unknown replica")
            del self.store[spec.replica_id]
            self.fault_log.append(spec)
            self._unpersist(spec.replica_id)
            return
        blocks, tag = self.fetch(spec.replica_id)
        i = spec.block_index
        if i is None or not 1 <= i <= len(blocks):
            raise ValueError("block index required and must be in 1..ell")
        if spec.kind is FaultKind.FLIP_BLOCK:
            # flip one bit below the chunk width: stays a valid field value
            bit = rng.randrange(8 * blockcodec.chunk_size(self.params.group))
            mutated = list(blocks)
            mutated[i - 1] ^= 1 << bit
            self.store[spec.replica_id] = (tuple(mutated), tag)
        elif spec.kind is FaultKind.ZERO_BLOCK:
            mutated = list(blocks)
            mutated[i - 1] = 0
            self.store[spec.replica_id] = (tuple(mutated), tag)
        elif spec.kind is FaultKind.TAMPER_TAG:
            delta = rng.randrange(1, self.params.group.q)
            t = list(tag.t)
            t[i - 1] = (t[i - 1] + delta) % self.params.group.q
            self.store[spec.replica_id] = (blocks, core.OnlineTag(tag.replica_id, tuple(t)))
        else:
            raise ValueError(f"unknown fault kind {spec.kind}")
        self.fault_log.append(spec)
        self._persist(spec.replica_id)

    # -- repair -----------------------------------------------------------------

    def apply_repair(
        self, replica_id: bytes, blocks: Sequence[Scalar], fresh_tag: core.OnlineTag
    ) -> None:
        """Install repaired content; overwrites whatever the id held before."""
        if fresh_tag.replica_id != replica_id:
            raise RepairError("fresh tag is bound to a different replica id")
        if len(fresh_tag.t) != len(blocks):
            raise RepairError("fresh tag length does not match block count")
        self.store[replica_id] = (tuple(blocks), fresh_tag)
        self._persist(replica_id)

    # -- persistence --------------------------------------------------------------

    def _paths(self, replica_id: bytes) -> Tuple[Path, Path]:
        stem = replica_id.hex()
        return self.storage_dir / f"{stem}.blk", self.storage_dir / f"{stem}.tag"

    def _persist(self, replica_id: bytes) -> None:
        if self.storage_dir is None:
            return
        blocks, tag = self.store[replica_id]
        blk_path, tag_path = self._paths(replica_id)
        blk_path.write_bytes(blockcodec.encode_block_bytes(blocks, self.params.group))
        tag_path.write_bytes(encode_tag_bytes(tag, self.params.group))

    def _unpersist(self, replica_id: bytes) -> None:
        if self.storage_dir is None:
            return
        for path in self._paths(replica_id):
            path.unlink(missing_ok=True)

    def _load_dir(self) -> None:
        for blk_path in sorted(self.storage_dir.glob("*.blk")):
            rid = bytes.fromhex(blk_path.stem)
            tag_path = blk_path.with_suffix(".tag")
            if not tag_path.exists():
                continue
            blocks = blockcodec.decode_block_bytes(blk_path.read_bytes(), self.params.group)
            tag = decode_tag_bytes(tag_path.read_bytes(), self.params.group)
            self.store[rid] = (blocks, tag)


def repair_pull(
    dest: EdgeServer,
    src: EdgeServer,
    id_src: bytes,
    id_dest: bytes,
    fresh_tag: core.OnlineTag,
) -> None:
    """Copy intact content from src to dest under dest's replica id.

    The caller supplies a tag freshly issued for id_dest; the old (possibly
    tampered) tag under id_dest is discarded.
    """
    if dest.index == src.index:
        raise RepairError("a server cannot repair a replica from itself")
    blocks, _ = src.fetch(id_src)
    dest.apply_repair(id_dest, blocks, fresh_tag)


def build_fleet(
    count: int,
    params: core.PublicParams,
    poff: core.PublicOfflineTag,
    base_dir: Optional[Path] = None,
) -> List[EdgeServer]:
    if count < 1:
        raise ValueError("fleet needs at least one server")
    servers = []
    for j in range(1, count + 1):
        sub = Path(base_dir) / f"server_{j:03d}" if base_dir else None
        servers.append(EdgeServer(j, params, poff, sub))
    return servers


# -- tag container ---------------------------------------------------------------


def encode_tag_bytes(tag: core.OnlineTag, group: Group) -> bytes:
    head = (
        TAG_FILE_MAGIC
        + bytes([TAG_FILE_VERSION])
        + length_prefixed(tag.replica_id)
        + len(tag.t).to_bytes(4, "big")
    )
    return head + b"".join(group.scalar_encode(t) for t in tag.t)


def tag_payload_size(group: Group, ell: int) -> int:
    return ell * group.scalar_size


def decode_tag_bytes(data: bytes, group: Group) -> core.OnlineTag:
    if data[: len(TAG_FILE_MAGIC)] != TAG_FILE_MAGIC:
        raise ValueError("not a tag file")
    pos = len(TAG_FILE_MAGIC)
    if data[pos] != TAG_FILE_VERSION:
        raise ValueError(f"unsupported tag file version {data[pos]}")
    pos += 1
    id_len = int.from_bytes(data[pos : pos + 2], "big")
    pos += 2
    replica_id = data[pos : pos + id_len]
    pos += id_len
    ell = int.from_bytes(data[pos : pos + 4], "big")
    pos += 4
    width = group.scalar_size
    if len(data) - pos != ell * width:
        raise ValueError("truncated tag payload")
    t = tuple(
        group.scalar_decode(data[pos + i * width : pos + (i + 1) * width])
        for i in range(ell)
    )
    return core.OnlineTag(replica_id, t)
