"""Conversion between byte files and block vectors over the scalar field.

A file becomes exactly ell scalars.  Chunks of (scalar_size - 1) bytes are
read big-endian, which keeps every block strictly below the group order.
The final data chunk is right-padded with the pad length (PKCS#7 style),
unused middle blocks are zero, and the last block stores the plaintext
byte length, so decoding is unambiguous and tamper-evident.

Layout for ell blocks, chunk size c = scalar_size - 1, data length L:

    [0 .. d-1]      data chunks (d = ceil(L / c); last chunk padded)
    [d .. ell-2]    zero blocks
    [ell-1]         L as an integer (the length trailer)

Capacity is therefore (ell - 1) * c bytes; longer inputs must be split
into several logical files first (split_into_files does this).
"""

from __future__ import annotations

import hashlib
import random
import secrets
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

from .groups import Group, Scalar

BLOCK_FILE_MAGIC = b"O2DI-BLK"
BLOCK_FILE_VERSION = 1


class BlockDecodeError(ValueError):
    """Block vector is not a valid encoding of any byte string."""


@dataclass(frozen=True)
class DataFile:
    blocks: Tuple[Scalar, ...]
    digest: bytes  # SHA3-256 of the original bytes


@dataclass(frozen=True)
class Replica:
    replica_id: bytes
    content: DataFile


def chunk_size(group: Group) -> int:
    return group.scalar_size - 1


def capacity(group: Group, ell: int) -> int:
    """Largest byte length a single ell-block file can carry."""
    return max(0, ell - 1) * chunk_size(group)


def content_digest(data: bytes) -> bytes:
    return hashlib.sha3_256(data).digest()


def encode_file(data: bytes, group: Group, ell: int) -> DataFile:
    c = chunk_size(group)
    if len(data) > capacity(group, ell):
        raise ValueError(
            f"{len(data)} bytes exceed the {capacity(group, ell)}-byte capacity "
            f"of {ell} blocks; split the input first"
        )
    blocks: List[int] = []
    for off in range(0, len(data) - len(data) % c, c):
        blocks.append(int.from_bytes(data[off : off + c], "big"))
    rem = len(data) % c
    if rem:
        pad = c - rem
        blocks.append(int.from_bytes(data[len(data) - rem :] + bytes([pad]) * pad, "big"))
    blocks.extend([0] * (ell - 1 - len(blocks)))
    blocks.append(len(data))  # length trailer
    return DataFile(tuple(blocks), content_digest(data))


def decode_blocks(blocks: Sequence[Scalar], group: Group) -> bytes:
    """Recover the byte string from a block vector; raises BlockDecodeError
    on malformed padding, filler or length trailer."""
    c = chunk_size(group)
    ell = len(blocks)
    if ell < 1:
        raise BlockDecodeError("empty block vector")
    for b in blocks:
        if not 0 <= b < group.q:
            raise BlockDecodeError("block value out of field range")
    length = blocks[-1]
    if length > capacity(group, ell):
        raise BlockDecodeError("length trailer exceeds capacity")
    d = -(-length // c) if length else 0
    raw = b"".join(int(b).to_bytes(c, "big") for b in blocks[:d])
    rem = length % c
    if rem:
        pad = c - rem
        if raw[length:] != bytes([pad]) * pad:
            raise BlockDecodeError("corrupted padding in final data chunk")
    for b in blocks[d : ell - 1]:
        if b != 0:
            raise BlockDecodeError("nonzero filler block")
    return raw[:length]


def decode_file(file: DataFile, group: Group) -> bytes:
    """Inverse of encode_file, additionally checking the content digest."""
    data = decode_blocks(file.blocks, group)
    if content_digest(data) != file.digest:
        raise BlockDecodeError("content digest mismatch")
    return data


def split_into_files(data: bytes, group: Group, ell: int) -> List[DataFile]:
    """Split arbitrarily long input into capacity-sized logical files."""
    cap = capacity(group, ell)
    if cap == 0 and data:
        raise ValueError("ell too small to carry any data")
    if not data:
        return [encode_file(b"", group, ell)]
    return [encode_file(data[off : off + cap], group, ell) for off in range(0, len(data), cap)]


def make_replicas(
    file: DataFile, count: int, rng: Optional[random.Random] = None
) -> List[Replica]:
    """Content-identical replicas, each with a unique identifier.

    The id binds the file digest, the replica slot and a nonce; uniqueness
    is what ties a tag to one cached copy on one server.
    """
    if count < 1:
        raise ValueError("need at least one replica")
    replicas = []
    seen = set()
    for j in range(1, count + 1):
        while True:
            nonce = (
                rng.getrandbits(64).to_bytes(8, "big") if rng else secrets.token_bytes(8)
            )
            rid = file.digest[:16] + j.to_bytes(4, "big") + nonce
            if rid not in seen:
                break
        seen.add(rid)
        replicas.append(Replica(rid, file))
    return replicas


# -- on-disk block file -------------------------------------------------------


def encode_block_bytes(blocks: Sequence[Scalar], group: Group) -> bytes:
    """Container format: magic, version, scalar width, block count, scalars."""
    head = (
        BLOCK_FILE_MAGIC
        + bytes([BLOCK_FILE_VERSION, group.scalar_size])
        + len(blocks).to_bytes(4, "big")
    )
    return head + b"".join(group.scalar_encode(b) for b in blocks)


def block_payload_size(group: Group, ell: int) -> int:
    return ell * group.scalar_size


def decode_block_bytes(data: bytes, group: Group) -> Tuple[Scalar, ...]:
    head_len = len(BLOCK_FILE_MAGIC) + 2 + 4
    if len(data) < head_len or data[: len(BLOCK_FILE_MAGIC)] != BLOCK_FILE_MAGIC:
        raise BlockDecodeError("not a block file")
    pos = len(BLOCK_FILE_MAGIC)
    version, width = data[pos], data[pos + 1]
    if version != BLOCK_FILE_VERSION:
        raise BlockDecodeError(f"unsupported block file version {version}")
    if width != group.scalar_size:
        raise BlockDecodeError("scalar width does not match the group")
    ell = int.from_bytes(data[pos + 2 : pos + 6], "big")
    body = data[head_len:]
    if len(body) != ell * width:
        raise BlockDecodeError("truncated block payload")
    return tuple(
        group.scalar_decode(body[i * width : (i + 1) * width]) for i in range(ell)
    )
