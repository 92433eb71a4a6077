import random
from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import chisquare

from oracles import exact_pmf, loop_select_j
from web3db import vrf
from web3db.errors import ConfigurationError
from web3db.sortition import (
    EXACT_WEIGHT_LIMIT,
    RoundSeed,
    SortitionProof,
    binomial_cdf_table,
    binomial_pmf,
    genesis_seed,
    next_seed,
    priority,
    retry_seed,
    select_j,
    sortition,
    verify_seed,
    verify_sortition,
)

KEYS = vrf.keygen(b"\x11" * 32)
SEED = genesis_seed(b"genesis-seed")


@pytest.mark.parametrize(
    "k,w,p,expected",
    [(0, 1, 0.1, 0.9), (2, 5, 0.5, 0.3125), (0, 0, 0.3, 1.0)],
)
def test_pmf_examples(k, w, p, expected):
    assert binomial_pmf(k, w, p) == pytest.approx(expected, rel=1e-15)


@pytest.mark.parametrize("args", [(3, 2, 0.5), (-1, 2, 0.5), (0, 2, 1.5), (0, 2, -0.1), (0, -1, 0.5)])
def test_pmf_rejects_bad_arguments(args):
    with pytest.raises(ValueError):
        binomial_pmf(*args)


@pytest.mark.parametrize("w", [0, 1, 7, 20, 21, 40, 64])
@pytest.mark.parametrize("p", ["1/10", "3/10", "1/2", "9/10"])
def test_pmf_matches_exact_rational_oracle(w, p):
    # The oracle sees exactly the binary value the library receives.
    pf = float(Fraction(p))
    for k in range(w + 1):
        want = float(exact_pmf(k, w, Fraction(pf)))
        got = binomial_pmf(k, w, pf)
        # Exact path below the cut-over, log-space above it.
        tol = 1e-15 if w <= EXACT_WEIGHT_LIMIT else 1e-11
        assert got == pytest.approx(want, rel=tol, abs=1e-300)


def test_cdf_table_ends_at_one():
    for w in (1, 5, 33):
        table = binomial_cdf_table(w, 0.3)
        assert table[-1] == 1.0
        assert all(a <= b for a, b in zip(table, table[1:]))


@pytest.mark.parametrize(
    "ratio,w,p,j", [(0.7, 0, 0.5, 0), (0.95, 1, 0.1, 1), (0.5, 1, 0.1, 0), (0.0, 3, 0.5, 0)]
)
def test_select_j_examples(ratio, w, p, j):
    assert select_j(ratio, w, p) == j


@settings(max_examples=300, deadline=None)
@given(
    num=st.integers(0, 2**32 - 1),
    w=st.integers(0, 12),
    p=st.sampled_from([Fraction(1, 10), Fraction(3, 10), Fraction(1, 2), Fraction(9, 10), Fraction(1, 7)]),
)
def test_select_j_matches_loop_oracle(num, w, p):
    ratio = Fraction(num, 2**32)
    assert select_j(float(ratio), w, float(p)) == loop_select_j(ratio, w, p)


@pytest.mark.parametrize("w,p", [(1, 0.1), (5, 0.3), (16, 0.5)])
def test_select_j_distribution_chi_square(w, p):
    rng = random.Random(1234 + w)
    counts = [0] * (w + 1)
    n = 100_000
    for _ in range(n):
        counts[select_j(rng.random(), w, p)] += 1
    expected = [n * binomial_pmf(k, w, p) for k in range(w + 1)]
    # Pool sparse tail cells so every expected count is at least 5.
    obs, exp = [], []
    acc_o = acc_e = 0.0
    for o, e in zip(counts, expected):
        acc_o += o
        acc_e += e
        if acc_e >= 5:
            obs.append(acc_o)
            exp.append(acc_e)
            acc_o = acc_e = 0.0
    obs[-1] += acc_o
    exp[-1] += acc_e
    assert chisquare(obs, exp).pvalue > 0.01


def test_sortition_zero_weight_never_selected():
    for r in range(50):
        assert sortition(KEYS.sk, RoundSeed(r, b"s"), 0, 10).j == 0


def test_sortition_deterministic_and_round_trips():
    a = sortition(KEYS.sk, SEED, 1, 10)
    assert a == sortition(KEYS.sk, SEED, 1, 10)
    assert verify_sortition(KEYS.pk, a, SEED, 1, 10) == a.j


def test_sortition_argument_errors():
    with pytest.raises(ConfigurationError):
        sortition(KEYS.sk, SEED, 0, 0)
    with pytest.raises(ValueError):
        sortition(KEYS.sk, SEED, 3, 2)


def test_sortition_selection_rate_monte_carlo():
    hits = 0
    seed = b"mc"
    n = 20_000
    for r in range(n):
        hits += sortition(KEYS.sk, RoundSeed(r, seed), 1, 10).j
    # 3 sigma for p=0.1 at this sample size.
    assert abs(hits / n - 0.1) < 3 * (0.09 / n) ** 0.5


def _winning_proof(keys, w=1, W=2):
    for r in range(100):
        seed = RoundSeed(r, b"find")
        sp = sortition(keys.sk, seed, w, W)
        if sp.j >= 1:
            return sp, seed
    raise AssertionError("no winning round found")


def test_verify_with_lower_weight_recomputes():
    sp, seed = _winning_proof(KEYS)
    assert verify_sortition(KEYS.pk, sp, seed, 0, 2) == 0


def test_verify_rejects_every_hash_and_proof_mutation():
    sp, seed = _winning_proof(KEYS)
    raw = sp.to_bytes()
    k, h = vrf.KEY_SIZE, vrf.HASHLEN // 8
    for i in range(k + h + vrf.PROOF_SIZE):
        bad = bytearray(raw)
        bad[i] ^= 0x01
        assert verify_sortition(KEYS.pk, SortitionProof.from_bytes(bytes(bad)), seed, 1, 2) == 0


def test_verify_rejects_seed_and_round_mutation():
    sp, seed = _winning_proof(KEYS)
    assert verify_sortition(KEYS.pk, sp, RoundSeed(seed.round, seed.value + b"x"), 1, 2) == 0
    assert verify_sortition(KEYS.pk, sp, RoundSeed(seed.round + 1, seed.value), 1, 2) == 0
    other = vrf.keygen(b"\x12" * 32)
    assert verify_sortition(other.pk, sp, seed, 1, 2) == 0


def test_proof_serialization_round_trip_and_length_check():
    sp, _ = _winning_proof(KEYS)
    assert SortitionProof.from_bytes(sp.to_bytes()) == sp
    with pytest.raises(ValueError):
        SortitionProof.from_bytes(sp.to_bytes()[:-1])


def test_priority_rules():
    sp, _ = _winning_proof(KEYS)
    zero = SortitionProof(sp.node_pk, sp.hash, sp.proof, 0, sp.round)
    assert priority(zero) is None
    one = SortitionProof(sp.node_pk, sp.hash, sp.proof, 1, sp.round)
    assert priority(one).value == vrf.digest(sp.hash + (0).to_bytes(4, "big"))
    three = SortitionProof(sp.node_pk, sp.hash, sp.proof, 3, sp.round)
    brute = sorted((vrf.digest(sp.hash + t.to_bytes(4, "big")), t) for t in range(3))[0]
    got = priority(three)
    assert (got.value, got.sub_user_index) == brute
    assert priority(three) == got


def test_seed_chain():
    master = vrf.keygen(b"\x21" * 32)
    s = SEED
    values = set()
    for _ in range(100):
        nxt = next_seed(s, master.sk)
        assert nxt == next_seed(s, master.sk)
        assert verify_seed(s, nxt, master.pk)
        assert not verify_seed(s, nxt, KEYS.pk)
        values.add(nxt.value)
        s = nxt
    assert len(values) == 100
    assert s.round == 100


def test_retry_seeds_distinct_and_keep_round():
    seeds = [retry_seed(SEED, i) for i in range(16)]
    assert seeds[0] == SEED
    assert len({s.value for s in seeds}) == 16
    assert all(s.round == SEED.round for s in seeds)
