"""Core tagging, challenge, proof and verification algorithms.

Everything here operates on scalars and group elements only; files,
servers and wire formats live in other modules.  The protagonist is the
per-replica tag vector

    t_i = lam * m_i + y * H'(id || T2 || i)      (i = 1..ell)

whose computation involves no group operations at all: the expensive
material (the exponent y, the blinded values T1 = g^y and T2 = pk^y) is
produced once, offline, and amortized over every replica tagged later.
Audits then check blinded linear combinations of blocks against the same
combinations of tags inside the pairing, so the verifier needs the tag
secrets but never the data.

Verification comes in four shapes: one replica (single pairing equation),
several files on one server (PRF-weighted aggregate), one file across
several servers (product of per-server proofs against precomputed
challenges), and the combination of both.  A trapdoor mechanism lets a
server locate which of its replicas broke a failed batch audit.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence, Set, Tuple, Union

from . import ibs
from .groups import (
    G1Element,
    G2Element,
    Group,
    HashSuite,
    Scalar,
    index_bytes,
    length_prefixed,
)

DEFAULT_CHALLENGED_BLOCKS = 100
DEFAULT_SUBSET_SIZE = 16

_SYSTEM_RNG = random.SystemRandom()


class InconsistentChallengeError(Exception):
    """The challenge pair (c1, c2) fails e(c2, g) = e(c1, Lambda); the
    prover aborts before touching any tag material."""


class PoolExhaustedError(Exception):
    """Strict one-time pool has too few unused entries; refill needed."""


# ---------------------------------------------------------------------------
# domain types
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PublicParams:
    group: Group
    suite: HashSuite
    ibs_params: ibs.IbsParams
    system_id: bytes
    pk: G1Element  # g^x
    ell: int  # blocks per data file


@dataclass(frozen=True)
class MasterSecret:
    system_sk: ibs.IbsSecretKey
    x: Scalar
    ibs_msk: ibs.IbsMasterKey


@dataclass(frozen=True)
class VendorSecretKey:
    lam: Scalar
    sk: ibs.IbsSecretKey


@dataclass(frozen=True)
class VendorPublicKey:
    vendor_id: bytes
    lam_pub: G1Element  # g^lam
    cert: ibs.IbsSignature  # authority's signature on lam_pub


@dataclass(frozen=True)
class PublicOfflineTag:
    t1: G1Element  # g^y
    cert: ibs.IbsSignature  # vendor's signature on t1
    pk: VendorPublicKey


@dataclass(frozen=True)
class SecretOfflineTag:
    t2: G1Element  # pk^y
    y: Scalar


@dataclass(frozen=True)
class OfflineTag:
    public: PublicOfflineTag
    secret: SecretOfflineTag


@dataclass(frozen=True)
class OnlineTag:
    replica_id: bytes
    t: Tuple[Scalar, ...]


@dataclass(frozen=True)
class AggregateTag:
    replica_ids: Tuple[bytes, ...]
    t: Tuple[Scalar, ...]


@dataclass(frozen=True)
class Challenge:
    c1: G1Element  # g^k
    c2: G1Element  # lam_pub^k
    coeffs: Tuple[Tuple[int, Scalar], ...]  # (block index 1..ell, weight)


@dataclass(frozen=True)
class Proof:
    p1: G2Element
    p2: G2Element


@dataclass
class PreChallengePool:
    """Precomputed (k_i, g^{k_i}, lam_pub^{k_i}) triples.

    With one_time=False (the default) entries may serve many audits; the
    per-audit sums k^(j) never leave the verifier, so reuse is safe.  With
    one_time=True each entry is consumed by the first audit that draws it.
    """

    entries: List[Tuple[Scalar, G1Element, G1Element]]
    one_time: bool = False
    used: Set[int] = field(default_factory=set)

    def __len__(self) -> int:
        return len(self.entries)

    def remaining(self) -> int:
        return len(self.entries) - len(self.used)


@dataclass(frozen=True)
class AggregateChallenge:
    pairs: Tuple[Tuple[G1Element, G1Element], ...]  # (c1^(j), c2^(j)) per server
    coeffs: Tuple[Tuple[int, Scalar], ...]
    secrets: Tuple[Scalar, ...]  # k^(j), kept by the verifier

    def challenge_for(self, j: int) -> Challenge:
        """Public challenge view handed to server j (0-based)."""
        c1, c2 = self.pairs[j]
        return Challenge(c1, c2, self.coeffs)


@dataclass
class Trapdoor:
    traps: Dict[bytes, Scalar]  # replica id -> expected proof exponent


# ---------------------------------------------------------------------------
# hash-input conventions
# ---------------------------------------------------------------------------


def tag_hash_input(group: Group, replica_id: bytes, t2: G1Element, i: int) -> bytes:
    """Bytes fed to H' for block i of a replica: id || T2 || i."""
    return length_prefixed(replica_id) + group.g1_encode(t2) + index_bytes(i)


def prf_input(replica_id: bytes, i: int) -> bytes:
    """Bytes fed to the PRF for block i of a replica: id || i."""
    return length_prefixed(replica_id) + index_bytes(i)


# ---------------------------------------------------------------------------
# key lifecycle
# ---------------------------------------------------------------------------


def setup(
    group: Group, ell: int, rng: Optional[random.Random] = None
) -> Tuple[PublicParams, MasterSecret]:
    """System bootstrap: hash suite, signature authority, master exponent."""
    if ell < 1:
        raise ValueError("block count must be at least 1")
    rng = rng or _SYSTEM_RNG
    suite = HashSuite(group)
    ibs_params, ibs_msk = ibs.ibs_gen(group, rng)
    system_id = rng.getrandbits(128).to_bytes(16, "big")
    system_sk = ibs.ibs_keygen(ibs_params, ibs_msk, system_id)
    x = group.random_nonzero_scalar(rng)
    params = PublicParams(group, suite, ibs_params, system_id, group.g1_exp(group.g, x), ell)
    return params, MasterSecret(system_sk, x, ibs_msk)


def extract(
    params: PublicParams,
    msk: MasterSecret,
    vendor_id: bytes,
    rng: Optional[random.Random] = None,
) -> Tuple[VendorSecretKey, VendorPublicKey]:
    grp = params.group
    lam = grp.random_nonzero_scalar(rng or _SYSTEM_RNG)
    lam_pub = grp.g1_exp(grp.g, lam)
    sk = ibs.ibs_keygen(params.ibs_params, msk.ibs_msk, vendor_id)
    cert = ibs.ibs_sign(
        params.ibs_params, msk.system_sk, params.system_id, grp.g1_encode(lam_pub)
    )
    return VendorSecretKey(lam, sk), VendorPublicKey(vendor_id, lam_pub, cert)


def offline_tag(
    params: PublicParams,
    pk_v: VendorPublicKey,
    sk_v: VendorSecretKey,
    rng: Optional[random.Random] = None,
) -> OfflineTag:
    """One-time tag material: all group exponentiations happen here."""
    grp = params.group
    y = grp.random_nonzero_scalar(rng or _SYSTEM_RNG)
    t1 = grp.g1_exp(grp.g, y)
    t2 = grp.g1_exp(params.pk, y)
    cert = ibs.ibs_sign(params.ibs_params, sk_v.sk, pk_v.vendor_id, grp.g1_encode(t1))
    return OfflineTag(PublicOfflineTag(t1, cert, pk_v), SecretOfflineTag(t2, y))


def online_tag(
    params: PublicParams,
    replica_id: bytes,
    otag: OfflineTag,
    blocks: Sequence[Scalar],
    sk_v: VendorSecretKey,
) -> OnlineTag:
    """Tag a replica with scalar arithmetic only: two multiplications and
    one hash per block, no exponentiations, no pairings."""
    if len(blocks) != params.ell:
        raise ValueError(f"expected {params.ell} blocks, got {len(blocks)}")
    grp = params.group
    suite = params.suite
    t2 = otag.secret.t2
    y = otag.secret.y
    lam = sk_v.lam
    t = []
    for i, m_i in enumerate(blocks, start=1):
        h_i = suite.hash_to_scalar(tag_hash_input(grp, replica_id, t2, i))
        t.append(grp.scalar_add(grp.scalar_mul(lam, m_i), grp.scalar_mul(y, h_i)))
    return OnlineTag(replica_id, tuple(t))


def precheck(params: PublicParams, poff: PublicOfflineTag) -> bool:
    """Validate the certificate chain of a public offline tag."""
    grp = params.group
    pk_ok = ibs.ibs_verify(
        params.ibs_params, poff.pk.cert, params.system_id, grp.g1_encode(poff.pk.lam_pub)
    )
    t1_ok = ibs.ibs_verify(
        params.ibs_params, poff.cert, poff.pk.vendor_id, grp.g1_encode(poff.t1)
    )
    return pk_ok and t1_ok


# ---------------------------------------------------------------------------
# challenges and proofs
# ---------------------------------------------------------------------------


def _sample_coefficients(
    group: Group, ell: int, num_challenged: Optional[int], rng: random.Random
) -> Tuple[Tuple[int, Scalar], ...]:
    size = num_challenged if num_challenged is not None else min(DEFAULT_CHALLENGED_BLOCKS, ell)
    if not 1 <= size <= ell:
        raise ValueError(f"challenged block count must be in 1..{ell}")
    indices = sorted(rng.sample(range(1, ell + 1), size))
    return tuple((i, group.random_nonzero_scalar(rng)) for i in indices)


def challgen1(
    params: PublicParams,
    pk_v: VendorPublicKey,
    num_challenged: Optional[int] = None,
    rng: Optional[random.Random] = None,
) -> Tuple[Challenge, Scalar]:
    """Fresh challenge for a single audit; the secret k stays with the caller."""
    grp = params.group
    rng = rng or _SYSTEM_RNG
    k = grp.random_nonzero_scalar(rng)
    c1 = grp.g1_exp(grp.g, k)
    c2 = grp.g1_exp(pk_v.lam_pub, k)
    return Challenge(c1, c2, _sample_coefficients(grp, params.ell, num_challenged, rng)), k


def challenge_is_consistent(params: PublicParams, chal: Challenge, pk_v: VendorPublicKey) -> bool:
    grp = params.group
    return grp.g2_eq(
        grp.pairing(chal.c2, grp.g), grp.pairing(chal.c1, pk_v.lam_pub)
    )


def gen_proof(
    params: PublicParams,
    chal: Challenge,
    tag: Union[OnlineTag, AggregateTag],
    pk_v: VendorPublicKey,
    blocks: Sequence[Scalar],
    vendor_id: bytes,
) -> Proof:
    """Prover side: blinded linear combination of blocks and tags.

    Raises InconsistentChallengeError when (c1, c2) is not a valid pair
    for the vendor key; this is a protocol abort, distinct from producing
    a proof the verifier would reject.
    """
    grp = params.group
    if not challenge_is_consistent(params, chal, pk_v):
        raise InconsistentChallengeError("challenge pair fails the pairing check")
    q = grp.q
    mu = 0
    tsum = 0
    for i, v in chal.coeffs:
        mu = (mu + v * blocks[i - 1]) % q
        tsum = (tsum + v * tag.t[i - 1]) % q
    h_id = params.suite.hash_to_g1(vendor_id)
    p1 = grp.pairing(grp.g1_exp(h_id, tsum), chal.c1)
    p2 = grp.pairing(h_id, grp.g1_exp(chal.c2, (-mu) % q))
    return Proof(p1, p2)


def _proof_target_base(params: PublicParams, poff: PublicOfflineTag) -> G2Element:
    """e(H(vendor id), T1): the base every proof equation exponentiates."""
    grp = params.group
    return grp.pairing(params.suite.hash_to_g1(poff.pk.vendor_id), poff.t1)


def check_proof1(
    params: PublicParams,
    otag: OfflineTag,
    chal: Challenge,
    k: Scalar,
    proof: Proof,
    replica_id: bytes,
) -> bool:
    """Single replica, single server: P1*P2 = e(H(ID), T1)^(k * sum_i H'_i v_i)."""
    grp = params.group
    suite = params.suite
    t2 = otag.secret.t2
    q = grp.q
    acc = 0
    for i, v in chal.coeffs:
        acc = (acc + suite.hash_to_scalar(tag_hash_input(grp, replica_id, t2, i)) * v) % q
    target = grp.g2_exp(_proof_target_base(params, otag.public), k * acc % q)
    return grp.g2_eq(grp.g2_mul(proof.p1, proof.p2), target)


def agg_data(
    params: PublicParams,
    k_tilde: Scalar,
    tags: Sequence[OnlineTag],
    files: Sequence[Sequence[Scalar]],
) -> Tuple[List[Scalar], AggregateTag]:
    """PRF-weighted aggregation of several (file, tag) pairs into one."""
    if len(tags) != len(files):
        raise ValueError("tags and files must cover the same file set")
    if not tags:
        raise ValueError("nothing to aggregate")
    grp = params.group
    suite = params.suite
    q = grp.q
    ell = params.ell
    for f in files:
        if len(f) != ell:
            raise ValueError(f"every file must have {ell} blocks")
    agg_blocks = [0] * ell
    agg_t = [0] * ell
    for tag, blocks in zip(tags, files):
        for i in range(1, ell + 1):
            w = suite.prf_eval(k_tilde, prf_input(tag.replica_id, i))
            agg_blocks[i - 1] = (agg_blocks[i - 1] + w * blocks[i - 1]) % q
            agg_t[i - 1] = (agg_t[i - 1] + w * tag.t[i - 1]) % q
    return agg_blocks, AggregateTag(tuple(t.replica_id for t in tags), tuple(agg_t))


def offline_challenge(
    params: PublicParams,
    pool_size: int,
    pk_v: VendorPublicKey,
    rng: Optional[random.Random] = None,
    one_time: bool = False,
) -> PreChallengePool:
    """Precompute challenge material; all exponentiations for later audits."""
    if pool_size < 1:
        raise ValueError("pool size must be at least 1")
    grp = params.group
    rng = rng or _SYSTEM_RNG
    entries = []
    for _ in range(pool_size):
        k_i = grp.random_nonzero_scalar(rng)
        entries.append((k_i, grp.g1_exp(grp.g, k_i), grp.g1_exp(pk_v.lam_pub, k_i)))
    return PreChallengePool(entries, one_time=one_time)


def challgen2(
    params: PublicParams,
    pool: PreChallengePool,
    n_servers: int,
    num_challenged: Optional[int] = None,
    subset_size: int = DEFAULT_SUBSET_SIZE,
    rng: Optional[random.Random] = None,
) -> AggregateChallenge:
    """Combine pool entries into per-server challenges.

    Uses only group multiplications and scalar additions; the point of the
    pool is that no exponentiation happens on the audit path.
    """
    if n_servers < 1:
        raise ValueError("need at least one server")
    if len(pool) == 0:
        raise ValueError("empty pre-challenge pool")
    subset_size = min(subset_size, len(pool))
    grp = params.group
    rng = rng or _SYSTEM_RNG
    if pool.one_time:
        fresh = [idx for idx in range(len(pool.entries)) if idx not in pool.used]
        if len(fresh) < n_servers * subset_size:
            raise PoolExhaustedError(
                f"{len(fresh)} unused entries left, audit needs {n_servers * subset_size}"
            )
        rng.shuffle(fresh)
    pairs = []
    secrets = []
    for j in range(n_servers):
        if pool.one_time:
            subset = fresh[j * subset_size : (j + 1) * subset_size]
            pool.used.update(subset)
        else:
            subset = rng.sample(range(len(pool.entries)), subset_size)
        k_j = 0
        c1 = None
        c2 = None
        for idx in subset:
            k_i, v_i, w_i = pool.entries[idx]
            k_j = grp.scalar_add(k_j, k_i)
            c1 = grp.g1_mul(c1, v_i)
            c2 = grp.g1_mul(c2, w_i)
        pairs.append((c1, c2))
        secrets.append(k_j)
    coeffs = _sample_coefficients(grp, params.ell, num_challenged, rng)
    return AggregateChallenge(tuple(pairs), coeffs, tuple(secrets))


def check_proof2(
    params: PublicParams,
    otag: OfflineTag,
    chal: Challenge,
    k: Scalar,
    k_tilde: Scalar,
    proof: Proof,
    replica_ids: Sequence[bytes],
) -> bool:
    """Several files, one server: the PRF weights of the aggregation enter
    the expected exponent alongside the per-block hash values."""
    grp = params.group
    suite = params.suite
    t2 = otag.secret.t2
    q = grp.q
    acc = 0
    for i, v in chal.coeffs:
        inner = 0
        for rid in replica_ids:
            w = suite.prf_eval(k_tilde, prf_input(rid, i))
            h = suite.hash_to_scalar(tag_hash_input(grp, rid, t2, i))
            inner = (inner + w * h) % q
        acc = (acc + v * inner) % q
    target = grp.g2_exp(_proof_target_base(params, otag.public), k * acc % q)
    return grp.g2_eq(grp.g2_mul(proof.p1, proof.p2), target)


def check_proof3(
    params: PublicParams,
    otag: OfflineTag,
    agg_chal: AggregateChallenge,
    proofs: Sequence[Proof],
    per_server_ids: Sequence[bytes],
) -> bool:
    """One file, several servers: product of all proofs against the summed
    per-server exponents."""
    if len(proofs) != len(agg_chal.secrets):
        raise ValueError("need exactly one proof per challenged server")
    if len(per_server_ids) != len(proofs):
        raise ValueError("need one replica id per server")
    grp = params.group
    suite = params.suite
    t2 = otag.secret.t2
    q = grp.q
    total = 0
    for k_j, rid in zip(agg_chal.secrets, per_server_ids):
        acc = 0
        for i, v in agg_chal.coeffs:
            acc = (acc + suite.hash_to_scalar(tag_hash_input(grp, rid, t2, i)) * v) % q
        total = (total + k_j * acc) % q
    product = params.group.g2_identity
    for proof in proofs:
        product = grp.g2_mul(product, grp.g2_mul(proof.p1, proof.p2))
    target = grp.g2_exp(_proof_target_base(params, otag.public), total)
    return grp.g2_eq(product, target)


def check_proof4(
    params: PublicParams,
    otag: OfflineTag,
    agg_chal: AggregateChallenge,
    k_tilde: Scalar,
    proofs: Sequence[Proof],
    per_server_replica_ids: Sequence[Sequence[bytes]],
) -> bool:
    """Several files on several servers: per-server aggregate proofs against
    PRF-weighted exponents, all collapsed into one comparison.

    The pairing count here is constant: one base pairing and one target
    exponentiation regardless of how many files are covered.
    """
    if len(proofs) != len(agg_chal.secrets):
        raise ValueError("need exactly one proof per challenged server")
    if len(per_server_replica_ids) != len(proofs):
        raise ValueError("need the replica id list of every server")
    grp = params.group
    suite = params.suite
    t2 = otag.secret.t2
    q = grp.q
    total = 0
    for k_j, ids in zip(agg_chal.secrets, per_server_replica_ids):
        acc = 0
        for i, v in agg_chal.coeffs:
            inner = 0
            for rid in ids:
                w = suite.prf_eval(k_tilde, prf_input(rid, i))
                h = suite.hash_to_scalar(tag_hash_input(grp, rid, t2, i))
                inner = (inner + w * h) % q
            acc = (acc + v * inner) % q
        total = (total + k_j * acc) % q
    product = grp.g2_identity
    for proof in proofs:
        product = grp.g2_mul(product, grp.g2_mul(proof.p1, proof.p2))
    target = grp.g2_exp(_proof_target_base(params, otag.public), total)
    return grp.g2_eq(product, target)


# ---------------------------------------------------------------------------
# localization
# ---------------------------------------------------------------------------


def loc_trap(
    params: PublicParams,
    replica_ids: Iterable[bytes],
    chal: Challenge,
    k: Scalar,
    soff: SecretOfflineTag,
) -> Trapdoor:
    """Per-replica expected exponents for the given challenge: a server can
    check its own replicas against them without learning the tag secrets."""
    grp = params.group
    suite = params.suite
    q = grp.q
    traps = {}
    for rid in replica_ids:
        acc = 0
        for i, v in chal.coeffs:
            acc = (acc + suite.hash_to_scalar(tag_hash_input(grp, rid, soff.t2, i)) * v) % q
        traps[rid] = k * acc % q
    return Trapdoor(traps)


def find_corrupted(
    params: PublicParams,
    poff: PublicOfflineTag,
    tags: Sequence[OnlineTag],
    files: Sequence[Sequence[Scalar]],
    chal: Challenge,
    trap: Trapdoor,
) -> Set[bytes]:
    """Re-prove every replica locally and report the ones whose proof misses
    the trapdoor target.  Returns the offending replica ids."""
    if len(tags) != len(files):
        raise ValueError("tags and files must cover the same replicas")
    grp = params.group
    base = _proof_target_base(params, poff)
    bad = set()
    for tag, blocks in zip(tags, files):
        if tag.replica_id not in trap.traps:
            raise ValueError(f"no trapdoor entry for replica {tag.replica_id.hex()}")
        proof = gen_proof(params, chal, tag, poff.pk, blocks, poff.pk.vendor_id)
        target = grp.g2_exp(base, trap.traps[tag.replica_id])
        if not grp.g2_eq(grp.g2_mul(proof.p1, proof.p2), target):
            bad.add(tag.replica_id)
    return bad
