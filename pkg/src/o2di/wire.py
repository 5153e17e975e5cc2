"""Wire format for vendor <-> server traffic.

Every exchange is one frame: a 4-byte big-endian payload length, a 1-byte
message type, then the payload.  Group elements travel in their canonical
compressed encodings, scalars fixed-width, byte strings with a 2-byte
length prefix.  The framing is used even for in-process transport so that
reported message sizes are the sizes real traffic would have.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple, Union

from . import core
from .groups import EncodingError, Group, Scalar

FRAME_HEADER_SIZE = 5

TYPE_CHALLENGE1 = 0x01
TYPE_CHALLENGE2 = 0x02
TYPE_CHALLENGE3 = 0x03
TYPE_CHALLENGE4 = 0x04
TYPE_PROOF = 0x05
TYPE_TRAPDOOR = 0x06
TYPE_CORRUPT_SET = 0x07
TYPE_REPAIR = 0x08
TYPE_FETCH = 0x09
TYPE_CONTENT = 0x0A
TYPE_ERROR = 0x0B
TYPE_ACK = 0x0C

ERR_UNKNOWN_REPLICA = 1
ERR_BAD_CHALLENGE = 2
ERR_NO_CHALLENGE_CONTEXT = 3
ERR_BAD_REQUEST = 4


class WireError(ValueError):
    """Frame or payload cannot be parsed."""


@dataclass(frozen=True)
class Challenge1Msg:
    chal: core.Challenge
    replica_id: bytes


@dataclass(frozen=True)
class Challenge2Msg:
    chal: core.Challenge
    k_tilde: Scalar
    replica_ids: Tuple[bytes, ...]


@dataclass(frozen=True)
class Challenge3Msg:
    chal: core.Challenge  # this server's (c1, c2) with the shared coefficients
    replica_id: bytes


@dataclass(frozen=True)
class Challenge4Msg:
    chal: core.Challenge
    k_tilde: Scalar
    replica_ids: Tuple[bytes, ...]


@dataclass(frozen=True)
class ProofMsg:
    proof: core.Proof


@dataclass(frozen=True)
class TrapdoorMsg:
    entries: Tuple[Tuple[bytes, Scalar], ...]  # (replica id, expected exponent)


@dataclass(frozen=True)
class CorruptSetMsg:
    replica_ids: Tuple[bytes, ...]


@dataclass(frozen=True)
class RepairMsg:
    replica_id: bytes
    blocks: Tuple[Scalar, ...]
    tag_values: Tuple[Scalar, ...]  # fresh tag scalars, bound to replica_id


@dataclass(frozen=True)
class FetchMsg:
    replica_id: bytes


@dataclass(frozen=True)
class ContentMsg:
    blocks: Tuple[Scalar, ...]


@dataclass(frozen=True)
class ErrorMsg:
    code: int
    detail: str


@dataclass(frozen=True)
class AckMsg:
    pass


Message = Union[
    Challenge1Msg,
    Challenge2Msg,
    Challenge3Msg,
    Challenge4Msg,
    ProofMsg,
    TrapdoorMsg,
    CorruptSetMsg,
    RepairMsg,
    FetchMsg,
    ContentMsg,
    ErrorMsg,
    AckMsg,
]


class Writer:
    def __init__(self):
        self.parts: List[bytes] = []

    def u8(self, v: int):
        self.parts.append(bytes([v]))

    def u16(self, v: int):
        self.parts.append(v.to_bytes(2, "big"))

    def u32(self, v: int):
        self.parts.append(v.to_bytes(4, "big"))

    def u64(self, v: int):
        self.parts.append(v.to_bytes(8, "big"))

    def lp(self, data: bytes):
        if len(data) > 0xFFFF:
            raise WireError("byte string too long")
        self.u16(len(data))
        self.parts.append(data)

    def lp32(self, data: bytes):
        self.u32(len(data))
        self.parts.append(data)

    def raw(self, data: bytes):
        self.parts.append(data)

    def getvalue(self) -> bytes:
        return b"".join(self.parts)

    def __len__(self) -> int:
        return sum(len(p) for p in self.parts)


class Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def _take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise WireError("truncated payload")
        out = self.data[self.pos : self.pos + n]
        self.pos += n
        return out

    def u8(self) -> int:
        return self._take(1)[0]

    def u16(self) -> int:
        return int.from_bytes(self._take(2), "big")

    def u32(self) -> int:
        return int.from_bytes(self._take(4), "big")

    def u64(self) -> int:
        return int.from_bytes(self._take(8), "big")

    def lp(self) -> bytes:
        return self._take(self.u16())

    def lp32(self) -> bytes:
        return self._take(self.u32())

    def raw(self, n: int) -> bytes:
        return self._take(n)

    def done(self) -> bool:
        return self.pos == len(self.data)


def _put_challenge_core(w: Writer, group: Group, chal: core.Challenge) -> int:
    """Write c1, c2 and the coefficient list; returns the byte size of this
    region (the part whose size the cost accounting tracks)."""
    start = len(w)
    w.raw(group.g1_encode(chal.c1))
    w.raw(group.g1_encode(chal.c2))
    for i, v in chal.coeffs:
        w.u64(i)
        w.raw(group.scalar_encode(v))
    return len(w) - start


def challenge_core_size(group: Group, num_coeffs: int) -> int:
    """2*l_G1 for the blinded pair plus (8 + l_Zq) per challenged block."""
    return 2 * group.g1_size + num_coeffs * (8 + group.scalar_size)


def _get_challenge_core(r: Reader, group: Group, count: int) -> core.Challenge:
    c1 = group.g1_decode(r.raw(group.g1_size))
    c2 = group.g1_decode(r.raw(group.g1_size))
    coeffs = []
    for _ in range(count):
        i = r.u64()
        v = group.scalar_decode(r.raw(group.scalar_size))
        coeffs.append((i, v))
    return core.Challenge(c1, c2, tuple(coeffs))


def encode_message(group: Group, msg: Message) -> Tuple[bytes, int]:
    """Serialize to a full frame; also returns the challenge-core size for
    challenge messages (0 for everything else)."""
    w = Writer()
    core_size = 0
    if isinstance(msg, (Challenge1Msg, Challenge3Msg)):
        mtype = TYPE_CHALLENGE1 if isinstance(msg, Challenge1Msg) else TYPE_CHALLENGE3
        w.u32(len(msg.chal.coeffs))
        core_size = _put_challenge_core(w, group, msg.chal)
        w.lp(msg.replica_id)
    elif isinstance(msg, (Challenge2Msg, Challenge4Msg)):
        mtype = TYPE_CHALLENGE2 if isinstance(msg, Challenge2Msg) else TYPE_CHALLENGE4
        w.u32(len(msg.chal.coeffs))
        core_size = _put_challenge_core(w, group, msg.chal)
        w.raw(group.scalar_encode(msg.k_tilde))
        w.u16(len(msg.replica_ids))
        for rid in msg.replica_ids:
            w.lp(rid)
    elif isinstance(msg, ProofMsg):
        mtype = TYPE_PROOF
        w.raw(group.g2_encode(msg.proof.p1))
        w.raw(group.g2_encode(msg.proof.p2))
    elif isinstance(msg, TrapdoorMsg):
        mtype = TYPE_TRAPDOOR
        w.u16(len(msg.entries))
        for rid, trap in msg.entries:
            w.lp(rid)
            w.raw(group.scalar_encode(trap))
    elif isinstance(msg, CorruptSetMsg):
        mtype = TYPE_CORRUPT_SET
        w.u16(len(msg.replica_ids))
        for rid in msg.replica_ids:
            w.lp(rid)
    elif isinstance(msg, RepairMsg):
        mtype = TYPE_REPAIR
        w.lp(msg.replica_id)
        w.u32(len(msg.blocks))
        for b in msg.blocks:
            w.raw(group.scalar_encode(b))
        for t in msg.tag_values:
            w.raw(group.scalar_encode(t))
    elif isinstance(msg, FetchMsg):
        mtype = TYPE_FETCH
        w.lp(msg.replica_id)
    elif isinstance(msg, ContentMsg):
        mtype = TYPE_CONTENT
        w.u32(len(msg.blocks))
        for b in msg.blocks:
            w.raw(group.scalar_encode(b))
    elif isinstance(msg, ErrorMsg):
        mtype = TYPE_ERROR
        w.u16(msg.code)
        w.lp(msg.detail.encode())
    elif isinstance(msg, AckMsg):
        mtype = TYPE_ACK
    else:
        raise WireError(f"cannot encode {type(msg).__name__}")
    payload = w.getvalue()
    frame = len(payload).to_bytes(4, "big") + bytes([mtype]) + payload
    return frame, core_size


def decode_message(group: Group, frame: bytes) -> Message:
    if len(frame) < FRAME_HEADER_SIZE:
        raise WireError("frame too short")
    length = int.from_bytes(frame[:4], "big")
    mtype = frame[4]
    payload = frame[FRAME_HEADER_SIZE:]
    if len(payload) != length:
        raise WireError("frame length mismatch")
    try:
        return _decode_payload(group, mtype, payload)
    except EncodingError as exc:
        raise WireError(f"bad element encoding: {exc}") from exc


def _decode_payload(group: Group, mtype: int, payload: bytes) -> Message:
    r = Reader(payload)
    if mtype in (TYPE_CHALLENGE1, TYPE_CHALLENGE3):
        count = r.u32()
        chal = _get_challenge_core(r, group, count)
        rid = r.lp()
        cls = Challenge1Msg if mtype == TYPE_CHALLENGE1 else Challenge3Msg
        msg = cls(chal, rid)
    elif mtype in (TYPE_CHALLENGE2, TYPE_CHALLENGE4):
        count = r.u32()
        chal = _get_challenge_core(r, group, count)
        k_tilde = group.scalar_decode(r.raw(group.scalar_size))
        ids = tuple(r.lp() for _ in range(r.u16()))
        cls = Challenge2Msg if mtype == TYPE_CHALLENGE2 else Challenge4Msg
        msg = cls(chal, k_tilde, ids)
    elif mtype == TYPE_PROOF:
        p1 = group.g2_decode(r.raw(group.g2_size))
        p2 = group.g2_decode(r.raw(group.g2_size))
        msg = ProofMsg(core.Proof(p1, p2))
    elif mtype == TYPE_TRAPDOOR:
        entries = []
        for _ in range(r.u16()):
            rid = r.lp()
            entries.append((rid, group.scalar_decode(r.raw(group.scalar_size))))
        msg = TrapdoorMsg(tuple(entries))
    elif mtype == TYPE_CORRUPT_SET:
        msg = CorruptSetMsg(tuple(r.lp() for _ in range(r.u16())))
    elif mtype == TYPE_REPAIR:
        rid = r.lp()
        ell = r.u32()
        blocks = tuple(group.scalar_decode(r.raw(group.scalar_size)) for _ in range(ell))
        tag_values = tuple(
            group.scalar_decode(r.raw(group.scalar_size)) for _ in range(ell)
        )
        msg = RepairMsg(rid, blocks, tag_values)
    elif mtype == TYPE_FETCH:
        msg = FetchMsg(r.lp())
    elif mtype == TYPE_CONTENT:
        ell = r.u32()
        msg = ContentMsg(
            tuple(group.scalar_decode(r.raw(group.scalar_size)) for _ in range(ell))
        )
    elif mtype == TYPE_ERROR:
        code = r.u16()
        msg = ErrorMsg(code, r.lp().decode())
    elif mtype == TYPE_ACK:
        msg = AckMsg()
    else:
        raise WireError(f"unknown message type 0x{mtype:02x}")
    if not r.done():
        raise WireError("trailing bytes in payload")
    return msg


def proof_payload_size(group: Group) -> int:
    return 2 * group.g2_size
