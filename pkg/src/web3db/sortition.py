"""Cryptographic sortition for per-query master election.

Each engine node evaluates its VRF on the round seed and maps the output
ratio ``hash / 2**256`` onto the binomial CDF for its weight ``w`` and the
selection probability ``p = w / W``. The resulting ``j`` is the number of
sub-users the node won; anyone holding the node's public key can recompute
``j`` from the proof.
"""

from __future__ import annotations

import math
from bisect import bisect_right
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache

from . import vrf
from .errors import ConfigurationError

# Weights up to this size are evaluated in exact rational arithmetic.
EXACT_WEIGHT_LIMIT = 20

_ROUND_BYTES = 8
_SUB_USER_BYTES = 4


def binomial_pmf(k: int, w: int, p: float) -> float:
    """Probability that exactly ``k`` of ``w`` sub-users are selected."""
    if w < 0 or k < 0 or k > w:
        raise ValueError(f"need 0 <= k <= w, got k={k}, w={w}")
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"p must lie in [0, 1], got {p}")
    if w <= EXACT_WEIGHT_LIMIT:
        return float(_exact_pmf(k, w, Fraction(p)))
    if p == 0.0:
        return 1.0 if k == 0 else 0.0
    if p == 1.0:
        return 1.0 if k == w else 0.0
    log_pmf = math.log(math.comb(w, k)) + k * math.log(p) + (w - k) * math.log1p(-p)
    return math.exp(log_pmf)


def _exact_pmf(k: int, w: int, p: Fraction) -> Fraction:
    return math.comb(w, k) * p**k * (1 - p) ** (w - k)


@lru_cache(maxsize=1024)
def binomial_cdf_table(w: int, p: float) -> tuple[float, ...]:
    """``(CDF(0), ..., CDF(w))``; the last entry is pinned to exactly 1."""
    if w <= EXACT_WEIGHT_LIMIT:
        q = Fraction(p)
        acc = Fraction(0)
        table = []
        for k in range(w + 1):
            acc += _exact_pmf(k, w, q)
            table.append(float(acc))
    else:
        pmf = [binomial_pmf(k, w, p) for k in range(w + 1)]
        table = [min(math.fsum(pmf[: k + 1]), 1.0) for k in range(w + 1)]
    table[-1] = 1.0
    return tuple(table)


def select_j(hash_ratio: float, w: int, p: float) -> int:
    """Return the unique ``j`` with ``CDF(j-1) <= hash_ratio < CDF(j)``."""
    if w <= 0:
        return 0
    table = binomial_cdf_table(w, p)
    return min(bisect_right(table, hash_ratio), w)


@dataclass(frozen=True)
class RoundSeed:
    round: int
    value: bytes
    proof: bytes = b""

    def vrf_input(self) -> bytes:
        return self.value + self.round.to_bytes(_ROUND_BYTES, "big")


@dataclass(frozen=True)
class SortitionProof:
    node_pk: bytes
    hash: bytes
    proof: bytes
    j: int
    round: int

    @property
    def hash_ratio(self) -> float:
        return int.from_bytes(self.hash, "big") / (1 << vrf.HASHLEN)

    def to_bytes(self) -> bytes:
        return (
            self.node_pk
            + self.hash
            + self.proof
            + self.j.to_bytes(4, "big")
            + self.round.to_bytes(_ROUND_BYTES, "big")
        )

    @classmethod
    def from_bytes(cls, data: bytes) -> SortitionProof:
        k, h, s = vrf.KEY_SIZE, vrf.HASHLEN // 8, vrf.PROOF_SIZE
        if len(data) != k + h + s + 4 + _ROUND_BYTES:
            raise ValueError("malformed sortition proof")
        return cls(
            node_pk=data[:k],
            hash=data[k : k + h],
            proof=data[k + h : k + h + s],
            j=int.from_bytes(data[k + h + s : k + h + s + 4], "big"),
            round=int.from_bytes(data[k + h + s + 4 :], "big"),
        )


@dataclass(frozen=True, order=True)
class Priority:
    """Lower ``value`` means higher priority."""

    value: bytes
    sub_user_index: int


def genesis_seed(value: bytes) -> RoundSeed:
    return RoundSeed(round=0, value=bytes(value), proof=b"")


def sortition(sk: bytes, seed: RoundSeed, w: int, W: int) -> SortitionProof:
    if W < 1:
        raise ConfigurationError("total weight W must be at least 1")
    if not 0 <= w <= W:
        raise ValueError(f"weight must satisfy 0 <= w <= W, got w={w}, W={W}")
    out = vrf.vrf_evaluate(sk, seed.vrf_input())
    p = w / W
    ratio = out.as_int() / (1 << vrf.HASHLEN)
    return SortitionProof(
        node_pk=vrf.public_from_secret(sk),
        hash=out.hash,
        proof=out.proof,
        j=select_j(ratio, w, p),
        round=seed.round,
    )


def verify_sortition(pk: bytes, sp: SortitionProof, seed: RoundSeed, w: int, W: int) -> int:
    """Recompute ``j`` for a claimed proof; any failure yields 0."""
    if sp.round != seed.round or sp.node_pk != pk:
        return 0
    if not vrf.vrf_verify(pk, seed.vrf_input(), vrf.VrfOutput(sp.hash, sp.proof)):
        return 0
    if W < 1 or not 0 <= w <= W:
        return 0
    return select_j(sp.hash_ratio, w, w / W)


def priority(sp: SortitionProof) -> Priority | None:
    if sp.j < 1:
        return None
    return min(
        Priority(vrf.digest(sp.hash + t.to_bytes(_SUB_USER_BYTES, "big")), t)
        for t in range(sp.j)
    )


def next_seed(prev: RoundSeed, master_sk: bytes) -> RoundSeed:
    r = prev.round + 1
    out = vrf.vrf_evaluate(master_sk, _seed_input(prev.value, r))
    return RoundSeed(round=r, value=out.hash, proof=out.proof)


def verify_seed(prev: RoundSeed, seed: RoundSeed, master_pk: bytes) -> bool:
    if seed.round != prev.round + 1:
        return False
    data = _seed_input(prev.value, seed.round)
    return vrf.vrf_verify(master_pk, data, vrf.VrfOutput(seed.value, seed.proof))


def _seed_input(prev_value: bytes, r: int) -> bytes:
    # Prefixed so a seed proof is never also a sortition proof.
    return b"seed" + prev_value + r.to_bytes(_ROUND_BYTES, "big")


def retry_seed(seed: RoundSeed, retry: int) -> RoundSeed:
    """Publicly derivable seed for the ``retry``-th re-run of an empty election."""
    if retry == 0:
        return seed
    value = vrf.digest(seed.value + b"retry" + retry.to_bytes(4, "big"))
    return RoundSeed(round=seed.round, value=value, proof=b"")
