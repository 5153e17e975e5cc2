"""Algebraic substrate: symmetric (Type-1) bilinear pairing, hashing, encodings.

The pairing is the modified Tate pairing on the supersingular curve
y^2 = x^3 + x over F_n with n prime, n = 3 (mod 4).  The curve has
n + 1 points; G1 is its subgroup of prime order q where n + 1 = q*h.
The distortion map psi(x, y) = (-x, i*y) (with i^2 = -1 in F_{n^2})
turns the Tate pairing into a symmetric map

    e(P, Q) = tate(P, psi(Q))  in  mu_q  subset of  F_{n^2}^*,

so both pairing arguments come from the same group G1 and the target
group G2 is the order-q subgroup of F_{n^2}^*.  Because the embedding
degree is 2 and vertical-line values land in F_n^*, they are erased by
the final exponentiation, which permits denominator elimination in the
Miller loop.

Representation choices:
  * scalars are plain ints in [0, q);
  * G1 elements are affine pairs (x, y) of gmpy2.mpz, or None for the
    identity;
  * G2 elements are pairs (a, b) of mpz meaning a + b*i.

All values are immutable, so everything here is safe to share between
threads once a Group has been constructed.
"""

from __future__ import annotations

import hashlib
import random
import secrets
from contextlib import contextmanager
from contextvars import ContextVar
from dataclasses import dataclass
from typing import Iterator, Optional, Tuple

from gmpy2 import invert, is_prime, mpz, next_prime, powmod

Scalar = int
G1Element = Optional[Tuple[mpz, mpz]]
G2Element = Tuple[mpz, mpz]

# security level -> (bits of the base field prime n, bits of the group order q)
SECURITY_LEVELS = {
    80: (512, 160),
    112: (1024, 224),
    128: (1536, 256),
}

_TAG_GEN = b"O2DI-GEN\x00"

_SYSTEM_RNG = random.SystemRandom()


class UnsupportedSecurityLevel(ValueError):
    """Requested security level has no configured parameter sizes."""


class EncodingError(ValueError):
    """Byte string is not a valid canonical encoding."""


@dataclass
class OpCounts:
    """Tally of algebraic operations performed inside a count_ops() block."""

    pairings: int = 0
    g1_exps: int = 0
    g2_exps: int = 0
    g1_muls: int = 0
    g2_muls: int = 0
    scalar_muls: int = 0
    scalar_adds: int = 0
    hash_to_g1_calls: int = 0
    hash_to_scalar_calls: int = 0
    prf_calls: int = 0


_ACTIVE_COUNTER: ContextVar[Optional[OpCounts]] = ContextVar(
    "o2di_op_counter", default=None
)


@contextmanager
def count_ops() -> Iterator[OpCounts]:
    """Count group/field operations performed by the enclosed code.

    Counters are per-invocation: nesting replaces the active tally, so an
    inner block never leaks counts into an outer one.
    """
    counts = OpCounts()
    token = _ACTIVE_COUNTER.set(counts)
    try:
        yield counts
    finally:
        _ACTIVE_COUNTER.reset(token)


def _bump(attr: str, amount: int = 1) -> None:
    counts = _ACTIVE_COUNTER.get()
    if counts is not None:
        setattr(counts, attr, getattr(counts, attr) + amount)


def _expand_bytes(tag: bytes, data: bytes, width: int) -> int:
    """Hash tag||data to a non-negative integer of `width` bytes via SHAKE-256."""
    return int.from_bytes(hashlib.shake_256(tag + data).digest(width), "big")


class Group:
    """A concrete Type-1 pairing group: order q, generator g, pairing e.

    Constructed by generate_group(); not meant to be instantiated by hand.
    """

    def __init__(self, n: int, q: int, g_seed: bytes, security_bits: int):
        self.n = mpz(n)
        self.q = int(q)
        self._qm = mpz(q)
        self.security_bits = security_bits
        self.cofactor = (n + 1) // q
        if (n + 1) % q != 0 or self.cofactor % self.q == 0:
            raise ValueError("q must divide n+1 exactly once")
        if n % 4 != 3:
            raise ValueError("base field prime must be 3 mod 4")
        self._sqrt_exp = (self.n + 1) // 4
        self.nbits = n.bit_length()
        self.qbits = q.bit_length()
        self.scalar_size = (self.qbits + 7) // 8
        self._fp_size = (self.nbits + 7) // 8
        self.g1_size = 1 + self._fp_size
        self.g2_size = 1 + self._fp_size
        self._g_seed = g_seed
        self.g = self._map_to_subgroup(_TAG_GEN + g_seed)
        if self.g is None:
            raise ValueError("generator derivation failed")

    # -- scalar field -------------------------------------------------------

    def random_scalar(self, rng: Optional[random.Random] = None) -> Scalar:
        return (rng or _SYSTEM_RNG).randrange(self.q)

    def random_nonzero_scalar(self, rng: Optional[random.Random] = None) -> Scalar:
        return (rng or _SYSTEM_RNG).randrange(1, self.q)

    def scalar_mul(self, a: Scalar, b: Scalar) -> Scalar:
        _bump("scalar_muls")
        return a * b % self.q

    def scalar_add(self, a: Scalar, b: Scalar) -> Scalar:
        _bump("scalar_adds")
        return (a + b) % self.q

    # -- G1: points of order q on y^2 = x^3 + x -----------------------------

    def g1_is_valid(self, p: G1Element) -> bool:
        if p is None:
            return True
        x, y = p
        return 0 <= x < self.n and 0 <= y < self.n and (
            y * y - x * x * x - x
        ) % self.n == 0

    def g1_in_subgroup(self, p: G1Element) -> bool:
        return self.g1_is_valid(p) and self._g1_exp_raw(p, self.q) is None

    def g1_mul(self, p: G1Element, r: G1Element) -> G1Element:
        """Group operation (written multiplicatively): p * r."""
        _bump("g1_muls")
        return self._affine_add(p, r)

    def g1_inv(self, p: G1Element) -> G1Element:
        if p is None:
            return None
        x, y = p
        return (x, (-y) % self.n)

    def g1_exp(self, p: G1Element, k: Scalar) -> G1Element:
        """p raised to the scalar k (i.e. [k]p on the curve)."""
        _bump("g1_exps")
        return self._g1_exp_raw(p, k % self.q)

    def g1_eq(self, p: G1Element, r: G1Element) -> bool:
        if p is None or r is None:
            return p is None and r is None
        return p[0] == r[0] and p[1] == r[1]

    def _affine_add(self, p: G1Element, r: G1Element) -> G1Element:
        n = self.n
        if p is None:
            return r
        if r is None:
            return p
        x1, y1 = p
        x2, y2 = r
        if x1 == x2:
            if (y1 + y2) % n == 0:
                return None
            m = (3 * x1 * x1 + 1) * invert(2 * y1, n) % n
        else:
            m = (y2 - y1) * invert(x2 - x1, n) % n
        x3 = (m * m - x1 - x2) % n
        y3 = (m * (x1 - x3) - y1) % n
        return (x3, y3)

    def _g1_exp_raw(self, p: G1Element, k: int) -> G1Element:
        """Windowed scalar multiplication in Jacobian coordinates."""
        if p is None or k == 0:
            return None
        if k < 0:
            return self._g1_exp_raw(self.g1_inv(p), -k)
        n = self.n
        # precompute odd multiples p, 3p, ..., 15p (Jacobian)
        pj = (p[0], p[1], mpz(1))
        twop = self._jac_double(pj)
        table = [pj]
        for _ in range(7):
            table.append(self._jac_add(table[-1], twop))
        acc = None
        bits = k.bit_length()
        i = bits - 1
        while i >= 0:
            if not (k >> i) & 1:
                acc = self._jac_double(acc) if acc is not None else None
                i -= 1
                continue
            # widest window ending in a set bit, at most 4 bits
            size = min(4, i + 1)
            while (k >> (i - size + 1)) & 1 == 0:
                size -= 1
            window = (k >> (i - size + 1)) & ((1 << size) - 1)
            if acc is not None:
                for _ in range(size):
                    acc = self._jac_double(acc)
                acc = self._jac_add(acc, table[window >> 1])
            else:
                acc = table[window >> 1]
            i -= size
        if acc is None:
            return None
        x, y, z = acc
        zi = invert(z, n)
        zi2 = zi * zi % n
        return (x * zi2 % n, y * zi2 * zi % n)

    def _jac_double(self, p):
        if p is None:
            return None
        n = self.n
        x, y, z = p
        if y == 0:
            return None
        yy = y * y % n
        s = 4 * x * yy % n
        zz = z * z % n
        m = (3 * x * x + zz * zz) % n  # curve coefficient a = 1
        x3 = (m * m - 2 * s) % n
        y3 = (m * (s - x3) - 8 * yy * yy) % n
        z3 = 2 * y * z % n
        return (x3, y3, z3)

    def _jac_add(self, p, r):
        if p is None:
            return r
        if r is None:
            return p
        n = self.n
        x1, y1, z1 = p
        x2, y2, z2 = r
        z1z1 = z1 * z1 % n
        z2z2 = z2 * z2 % n
        u1 = x1 * z2z2 % n
        u2 = x2 * z1z1 % n
        s1 = y1 * z2 * z2z2 % n
        s2 = y2 * z1 * z1z1 % n
        if u1 == u2:
            if s1 != s2:
                return None
            return self._jac_double(p)
        h = (u2 - u1) % n
        i = (2 * h) ** 2 % n
        j = h * i % n
        rr = 2 * (s2 - s1) % n
        v = u1 * i % n
        x3 = (rr * rr - j - 2 * v) % n
        y3 = (rr * (v - x3) - 2 * s1 * j) % n
        z3 = ((z1 + z2) ** 2 - z1z1 - z2z2) % n * h % n
        return (x3, y3, z3)

    # -- G2: order-q subgroup of F_{n^2}^* ----------------------------------

    @property
    def g2_identity(self) -> G2Element:
        return (mpz(1), mpz(0))

    def g2_mul(self, u: G2Element, v: G2Element) -> G2Element:
        _bump("g2_muls")
        return self._fp2_mul(u, v)

    def g2_inv(self, u: G2Element) -> G2Element:
        # elements of mu_q are unitary, so inversion is conjugation
        return (u[0], (-u[1]) % self.n)

    def g2_exp(self, u: G2Element, k: Scalar) -> G2Element:
        _bump("g2_exps")
        k %= self.q
        if k == 0:
            return self.g2_identity
        return self._fp2_pow(u, k)

    def g2_eq(self, u: G2Element, v: G2Element) -> bool:
        return u[0] == v[0] and u[1] == v[1]

    def g2_in_subgroup(self, u: G2Element) -> bool:
        a, b = u
        if not (0 <= a < self.n and 0 <= b < self.n):
            return False
        return self._fp2_pow(u, self.q) == (1, 0)

    def _fp2_mul(self, u, v):
        n = self.n
        a, b = u
        c, d = v
        ac = a * c % n
        bd = b * d % n
        return ((ac - bd) % n, ((a + b) * (c + d) - ac - bd) % n)

    def _fp2_sqr(self, u):
        n = self.n
        a, b = u
        return ((a - b) * (a + b) % n, 2 * a * b % n)

    def _fp2_pow(self, u, k: int):
        acc = (mpz(1), mpz(0))
        for bit in bin(k)[2:]:
            acc = self._fp2_sqr(acc)
            if bit == "1":
                acc = self._fp2_mul(acc, u)
        return acc

    def _fp2_inv(self, u):
        n = self.n
        a, b = u
        d = invert(a * a + b * b, n)
        return (a * d % n, (-b) * d % n)

    # -- pairing -------------------------------------------------------------

    def pairing(self, p: G1Element, r: G1Element) -> G2Element:
        """Symmetric pairing e(p, r) = tate(p, psi(r)), value in mu_q."""
        _bump("pairings")
        if p is None or r is None:
            return self.g2_identity
        n = self.n
        xq = (-r[0]) % n  # x-coordinate of psi(r)
        yq = r[1]  # i-part of psi(r)'s y-coordinate
        f = (mpz(1), mpz(0))
        rx, ry = p
        px, py = p
        for bit in bin(self.q)[3:]:
            # tangent line at (rx, ry), evaluated at psi(r)
            m = (3 * rx * rx + 1) * invert(2 * ry, n) % n
            c0 = (m * (rx - xq) - ry) % n
            a, b = self._fp2_sqr(f)
            f = ((a * c0 - b * yq) % n, (a * yq + b * c0) % n)
            x3 = (m * m - 2 * rx) % n
            ry = (m * (rx - x3) - ry) % n
            rx = x3
            if bit == "1":
                if rx == px and (ry + py) % n == 0:
                    # final vertical line: value in F_n, erased by the
                    # final exponentiation -- skip it (loop is ending)
                    continue
                m = (py - ry) * invert(px - rx, n) % n
                c0 = (m * (rx - xq) - ry) % n
                a, b = f
                f = ((a * c0 - b * yq) % n, (a * yq + b * c0) % n)
                x3 = (m * m - rx - px) % n
                ry = (m * (rx - x3) - ry) % n
                rx = x3
        return self._final_exp(f)

    def _final_exp(self, f: G2Element) -> G2Element:
        # f^(n-1) via Frobenius (conjugation), then power by (n+1)/q
        conj = (f[0], (-f[1]) % self.n)
        u = self._fp2_mul(conj, self._fp2_inv(f))
        return self._fp2_pow(u, self.cofactor)

    # -- square roots and point mapping --------------------------------------

    def _sqrt_fp(self, t: mpz) -> Optional[mpz]:
        y = powmod(t, self._sqrt_exp, self.n)
        return y if y * y % self.n == t else None

    def _map_to_subgroup(self, seed: bytes) -> G1Element:
        """Map bytes to a point of order q (deterministic, retry on rare misses)."""
        n = self.n
        for ctr in range(256):
            u = mpz(_expand_bytes(b"", seed + bytes([ctr]), self._fp_size + 16)) % n
            t = (u * u * u + u) % n
            if t == 0:
                continue
            y = self._sqrt_fp(t)
            if y is None:
                # -u gives -t, which is a square since -1 is not (n = 3 mod 4)
                u = (-u) % n
                y = self._sqrt_fp((-t) % n)
                if y is None:
                    continue
            if y > n - y:
                y = n - y
            p = self._g1_exp_raw((u, y), self.cofactor)
            if p is not None:
                return p
        raise EncodingError("could not map input to the curve")

    # -- canonical encodings --------------------------------------------------

    def scalar_encode(self, s: Scalar) -> bytes:
        if not 0 <= s < self.q:
            raise EncodingError("scalar out of range")
        return int(s).to_bytes(self.scalar_size, "big")

    def scalar_decode(self, data: bytes) -> Scalar:
        if len(data) != self.scalar_size:
            raise EncodingError("bad scalar length")
        s = int.from_bytes(data, "big")
        if s >= self.q:
            raise EncodingError("scalar not reduced")
        return s

    def g1_encode(self, p: G1Element) -> bytes:
        if p is None:
            return b"\x00" * self.g1_size
        x, y = p
        return bytes([2 + int(y & 1)]) + int(x).to_bytes(self._fp_size, "big")

    def g1_decode(self, data: bytes, check_subgroup: bool = False) -> G1Element:
        if len(data) != self.g1_size:
            raise EncodingError("bad G1 length")
        prefix = data[0]
        if prefix == 0:
            if any(data[1:]):
                raise EncodingError("bad identity encoding")
            return None
        if prefix not in (2, 3):
            raise EncodingError("bad G1 prefix")
        x = mpz(int.from_bytes(data[1:], "big"))
        if x >= self.n:
            raise EncodingError("G1 coordinate out of range")
        y = self._sqrt_fp((x * x * x + x) % self.n)
        if y is None:
            raise EncodingError("not a curve point")
        if int(y & 1) != prefix - 2:
            y = (-y) % self.n
        p = (x, y)
        if check_subgroup and not self.g1_in_subgroup(p):
            raise EncodingError("point not in the prime-order subgroup")
        return p

    def g2_encode(self, u: G2Element) -> bytes:
        # mu_q elements have norm a^2 + b^2 = 1, so b is recoverable from a
        a, b = u
        return bytes([2 + int(b & 1)]) + int(a).to_bytes(self._fp_size, "big")

    def g2_decode(self, data: bytes, check_subgroup: bool = False) -> G2Element:
        if len(data) != self.g2_size:
            raise EncodingError("bad G2 length")
        prefix = data[0]
        if prefix not in (2, 3):
            raise EncodingError("bad G2 prefix")
        a = mpz(int.from_bytes(data[1:], "big"))
        if a >= self.n:
            raise EncodingError("G2 coordinate out of range")
        b = self._sqrt_fp((1 - a * a) % self.n)
        if b is None:
            raise EncodingError("not a norm-1 element")
        if int(b & 1) != prefix - 2:
            b = (-b) % self.n
        u = (a, b)
        if check_subgroup and not self.g2_in_subgroup(u):
            raise EncodingError("element not in the order-q subgroup")
        return u

    def describe(self) -> dict:
        """Constants other layers rely on (sizes in bytes)."""
        return {
            "security_bits": self.security_bits,
            "n_bits": self.nbits,
            "q_bits": self.qbits,
            "scalar_size": self.scalar_size,
            "g1_size": self.g1_size,
            "g2_size": self.g2_size,
        }


class HashSuite:
    """Domain-separated hash-to-group, hash-to-scalar and PRF over a Group.

    The namespace keeps independent users of the same group (the tagging
    scheme, the signature scheme) from sharing random oracles: tags are
    "<namespace>-H", "<namespace>-Hp" and "<namespace>-F", each terminated
    by a zero byte so that no tag is a prefix of another.
    """

    def __init__(self, group: Group, namespace: bytes = b"O2DI"):
        self.group = group
        self._tag_h = namespace + b"-H\x00"
        self._tag_hp = namespace + b"-Hp\x00"
        self._tag_f = namespace + b"-F\x00"

    def hash_to_g1(self, data: bytes) -> G1Element:
        _bump("hash_to_g1_calls")
        return self.group._map_to_subgroup(self._tag_h + data)

    def hash_to_scalar(self, data: bytes) -> Scalar:
        _bump("hash_to_scalar_calls")
        digest = hashlib.sha3_256(self._tag_hp + data).digest()
        return int.from_bytes(digest, "big") % self.group.q

    def prf_eval(self, key: Scalar, data: bytes) -> Scalar:
        _bump("prf_calls")
        keyed = self._tag_f + self.group.scalar_encode(key) + data
        return int.from_bytes(hashlib.sha3_256(keyed).digest(), "big") % self.group.q


def generate_type_a_group(
    nbits: int, qbits: int, seed: Optional[int] = None, security_bits: int = 0
) -> Group:
    """Find type-A parameters: q prime of qbits, n = 4mq - 1 prime of nbits."""
    rng = random.Random(seed) if seed is not None else _SYSTEM_RNG
    while True:
        q = int(next_prime(rng.getrandbits(qbits - 1) | (1 << (qbits - 1))))
        if q.bit_length() == qbits:
            break
    mbits = nbits - qbits - 2
    while True:
        m = rng.getrandbits(mbits - 1) | (1 << (mbits - 1))
        n = 4 * m * q - 1
        if n.bit_length() != nbits:
            continue
        if (4 * m) % q == 0:
            continue
        if is_prime(n):
            break
    g_seed = n.to_bytes((nbits + 7) // 8, "big") + q.to_bytes((qbits + 7) // 8, "big")
    return Group(n, q, g_seed, security_bits or qbits // 2)


def generate_group(security_bits: int, seed: Optional[int] = None) -> Group:
    """Build a pairing group at one of the supported security levels."""
    if security_bits not in SECURITY_LEVELS:
        raise UnsupportedSecurityLevel(
            f"unsupported security level {security_bits}; "
            f"choose one of {sorted(SECURITY_LEVELS)}"
        )
    nbits, qbits = SECURITY_LEVELS[security_bits]
    return generate_type_a_group(nbits, qbits, seed=seed, security_bits=security_bits)


def length_prefixed(data: bytes) -> bytes:
    """2-byte big-endian length prefix, used for variable parts of hash inputs."""
    if len(data) > 0xFFFF:
        raise ValueError("field too long for 2-byte length prefix")
    return len(data).to_bytes(2, "big") + data


def index_bytes(i: int) -> bytes:
    """Block/position indices are hashed as 8-byte big-endian integers."""
    return i.to_bytes(8, "big")
