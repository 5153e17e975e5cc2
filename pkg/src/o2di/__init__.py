"""Remote integrity inspection for replicated edge caches.

An app vendor tags data replicas with cheap per-block scalars, caches them
on edge servers, discards the data, and later audits any subset of files
and servers with compact pairing-based challenges.  Corrupted replicas can
be localized with trapdoors and repaired from healthy holders.
"""

from .blockcodec import DataFile, Replica, decode_file, encode_file, make_replicas
from .core import (
    AggregateChallenge,
    AggregateTag,
    Challenge,
    InconsistentChallengeError,
    MasterSecret,
    OfflineTag,
    OnlineTag,
    PoolExhaustedError,
    PreChallengePool,
    Proof,
    PublicParams,
    Trapdoor,
    VendorPublicKey,
    VendorSecretKey,
    agg_data,
    challgen1,
    challgen2,
    check_proof1,
    check_proof2,
    check_proof3,
    check_proof4,
    extract,
    find_corrupted,
    gen_proof,
    loc_trap,
    offline_challenge,
    offline_tag,
    online_tag,
    precheck,
    setup,
)
from .fleet import EdgeServer, FaultKind, FaultSpec, build_fleet, repair_pull
from .groups import Group, HashSuite, count_ops, generate_group
from .protocol import AuditReport, Manifest, RepairPlan, Vendor

__version__ = "0.1.0"
