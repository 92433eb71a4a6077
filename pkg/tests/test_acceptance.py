"""Acceptance gate: one test per criterion, each printing a PASS/FAIL line."""

import io
import itertools
import json
import random
import time
from collections import Counter
from contextlib import redirect_stdout

import pytest
from hypothesis import settings
from hypothesis.stateful import run_state_machine_as_test
from scipy.stats import chisquare

from corpus import QUERIES, make_tables
from tables import random_table
from test_ledger import USERS, HASHES, AclMachine, _grant, _register, _revoke, _update
from web3db import vrf
from web3db.cli import main as cli_main
from web3db.engine import execute_partitioned, parse, plan, reference_execute
from web3db.errors import UnavailableError
from web3db.gossip import GossipNetwork, build_network
from web3db.ledger import Ledger
from web3db.orchestrator import STATUS_OK, Simulation, SimulationConfig, rotation_violations, simulate
from web3db.sortition import RoundSeed, SortitionProof, binomial_pmf, select_j, sortition, verify_sortition
from web3db.storage import BlockStore, get_table, put_table


def _detail(criterion, text):
    criterion.state["detail"] = text


def test_c01_sortition_distribution(criterion):
    criterion("C1 sortition distribution: 10 nodes x 10000 rounds")
    buf = io.StringIO()
    start = time.perf_counter()
    with redirect_stdout(buf):
        assert cli_main(["sortition-stats", "--nodes", "10", "--rounds", "10000"]) == 0
    elapsed = time.perf_counter() - start
    stats = json.loads(buf.getvalue())
    freqs = stats["per_node_frequency"]
    frac = stats["candidate_round_fraction"]
    _detail(criterion, f"freq {min(freqs):.4f}..{max(freqs):.4f}, candidate rounds {frac:.4f}, {elapsed:.1f}s")
    assert all(abs(f - 0.100) <= 0.010 for f in freqs)
    assert abs(frac - (1 - 0.9**10)) <= 0.015
    assert abs(1 - 0.9**10 - 0.6513) < 1e-4
    assert elapsed < 30


def test_c02_verification_round_trip(criterion):
    criterion("C2 verification round trip: 1000 honest and 1000 mutated proofs")
    rng = random.Random(2)
    honest = mutated = 0
    prefix = vrf.KEY_SIZE + vrf.HASHLEN // 8 + vrf.PROOF_SIZE
    for _ in range(1000):
        keys = vrf.keygen(rng.randbytes(32))
        seed = RoundSeed(rng.randrange(2**32), rng.randbytes(32))
        W = rng.randint(1, 10)
        w = rng.randint(1, W)
        sp = sortition(keys.sk, seed, w, W)
        honest += verify_sortition(keys.pk, sp, seed, w, W) == sp.j
        raw = bytearray(sp.to_bytes())
        # Any byte of pk, hash, proof or round; j is a claim the verifier recomputes.
        pos = rng.choice([*range(prefix), *range(prefix + 4, len(raw))])
        raw[pos] ^= rng.randint(1, 255)
        mutated += verify_sortition(keys.pk, SortitionProof.from_bytes(bytes(raw)), seed, w, W) == 0
    _detail(criterion, f"honest {honest}/1000, mutated rejected {mutated}/1000")
    assert honest == 1000 and mutated == 1000


def test_c03_binomial_correctness(criterion):
    criterion("C3 binomial correctness: pmf sums and chi-square (w=5, p=0.3)")
    worst = 0.0
    for p in (0.1, 0.3, 0.5, 0.9):
        for w in range(65):
            worst = max(worst, abs(sum(binomial_pmf(k, w, p) for k in range(w + 1)) - 1))
    rng = random.Random(3)
    counts = Counter(select_j(rng.random(), 5, 0.3) for _ in range(100_000))
    observed = [counts[k] for k in range(6)]
    expected = [100_000 * binomial_pmf(k, 5, 0.3) for k in range(6)]
    # k=5 expects 243 samples, so no pooling is needed.
    pvalue = chisquare(observed, expected).pvalue
    _detail(criterion, f"max |sum-1| {worst:.2e}, chi-square p {pvalue:.3f}")
    assert worst <= 1e-12
    assert pvalue > 0.01


def test_c04_oracle_equivalence(criterion):
    criterion("C4 oracle equivalence: 30 queries x workers {1,2,4,8}")
    assert len(QUERIES) == 30
    start = time.perf_counter()
    checked = 0
    for trial in range(3):
        rng = random.Random(40 + trial)
        tables = make_tables(rng, rng.randint(200, 1000))
        for sql in QUERIES:
            stmt = parse(sql)
            want = reference_execute(stmt, tables)
            for k in (1, 2, 4, 8):
                got, _ = execute_partitioned(stmt, tables, k)
                assert Counter(got.rows) == Counter(want.rows), (sql, k)
                if stmt.order_by:
                    assert got.rows == want.rows, (sql, k)
                checked += 1
    elapsed = time.perf_counter() - start
    _detail(criterion, f"{checked} executions, {elapsed:.1f}s")
    assert elapsed < 120


def test_c05_acl_enforcement(criterion):
    criterion("C5 ACL enforcement: deny/grant/revoke/hash-update state machine")
    ledger = Ledger()
    owner, grantee, _ = USERS
    _register(ledger, owner, HASHES[0])
    assert not ledger.acl_check(grantee.pk, HASHES[0])  # deny before grant
    _grant(ledger, owner, grantee.pk, HASHES[0])
    assert ledger.acl_check(grantee.pk, HASHES[0])  # allow after grant
    _update(ledger, owner, HASHES[0], HASHES[1])
    assert ledger.acl_check(grantee.pk, HASHES[1])  # grant follows hash update
    _revoke(ledger, owner, grantee.pk, HASHES[1])
    assert not ledger.acl_check(grantee.pk, HASHES[1])  # deny after revoke
    run_state_machine_as_test(
        AclMachine, settings=settings(max_examples=150, stateful_step_count=40, deadline=None)
    )
    _detail(criterion, "scenario + 150 random command sequences")


@pytest.fixture(scope="module")
def long_run():
    cfg = SimulationConfig(
        datasets=[{"table": "lineitem", "owner": "alice", "generator": "lineitem", "rows": 200, "seed": 6}],
        rng_seed="acceptance-1000",
    )
    sim = Simulation(cfg)
    sql = "SELECT l_returnflag, SUM(l_quantity), AVG(l_discount) FROM lineitem GROUP BY l_returnflag"
    weight_violations = cache_violations = ok = 0
    for _ in range(1000):
        lc = sim.submit(sim.users["alice"], sql)
        if lc.status != STATUS_OK:
            continue
        ok += 1
        if sim.ledger.weight(lc.master_pk) != 0 or any(sim.ledger.weight(pk) != 1 for pk in lc.worker_pks):
            weight_violations += 1
        if sum(n.registry.total_bytes for n in sim.nodes) != 0:
            cache_violations += 1
    return sim, ok, weight_violations, cache_violations


def test_c06_weight_lifecycle(criterion, long_run):
    criterion("C6 weight lifecycle: 1000-round simulation")
    sim, ok, weight_violations, _ = long_run
    rotation = rotation_violations(sim.lifecycles)
    _detail(criterion, f"{ok} ok rounds, weight violations {weight_violations}, rotation violations {rotation}")
    assert ok == 1000
    assert weight_violations == 0 and rotation == 0


def test_c07_gossip_delivery(criterion):
    criterion("C7 gossip delivery: 50 nodes, fanout 3, 100 connected topologies")
    keys = [vrf.keygen(bytes([77, i]) + bytes(30)) for i in range(50)]
    pks = [k.pk for k in keys]
    rng = random.Random(7)
    topologies = 0
    seed = 0
    tampered_forwards = duplicate_forwards = 0
    while topologies < 100:
        topo = build_network(pks, 3, seed.to_bytes(4, "big"))
        seed += 1
        if not topo.is_connected():
            continue
        topologies += 1
        origin = rng.randrange(50)
        net = GossipNetwork(topo)
        trace = net.broadcast(keys[origin].sk, b"query-%d" % seed, seed)
        assert trace.delivered_fraction(pks) == 1.0
        duplicate_forwards += len(net.forward_log) - len(set(net.forward_log))

        evil = pks[rng.choice([i for i in range(50) if i != origin])]
        bad = GossipNetwork(topo, tamper={evil: lambda n, m: m.__class__(m.msg_id, m.origin_pk, m.payload + b"x", m.signature, m.round, m.hop_count)})
        trace = bad.broadcast(keys[origin].sk, b"query-%d" % seed, seed)
        for pk in pks:
            for m in bad.inbox_messages(pk):
                # Honest nodes forward only what sits in their inbox.
                if pk != evil and (not m.verify() or m.payload != b"query-%d" % seed):
                    tampered_forwards += 1
        duplicate_forwards += len(bad.forward_log) - len(set(bad.forward_log))
    _detail(criterion, f"{topologies} topologies, tampered forwards {tampered_forwards}, duplicate forwards {duplicate_forwards}")
    assert tampered_forwards == 0 and duplicate_forwards == 0


def test_c08_storage_resilience(criterion):
    criterion("C8 storage resilience: r=3 failure subsets and 100 table round trips")
    store = BlockStore(node_count=6, replication=3)
    blocks = {store.put(b"block-%d" % i): b"block-%d" % i for i in range(20)}
    for h, data in blocks.items():
        assert len(store.holders(h)) == 3
        for f in range(3):
            for failed in itertools.combinations(range(6), f):
                for n in failed:
                    store.fail_node(n)
                assert store.get(h) == data
                for n in failed:
                    store.restore_node(n)
        for n in store.holders(h):
            store.fail_node(n)
        with pytest.raises(UnavailableError):
            store.get(h)
        for n in range(6):
            store.restore_node(n)
    rng = random.Random(8)
    for _ in range(100):
        block = rng.randbytes(rng.randint(1, 2000))
        assert store.get(store.put(block)) == block
        t = random_table(rng)
        assert get_table(store, put_table(store, t, rng.randint(1, 64))) == t
    _detail(criterion, "20 blocks x all <=2-node failures, 100 block and table round trips")


def test_c09_cache_hygiene(criterion, long_run):
    criterion("C9 cache hygiene: registry sum after every ok lifecycle")
    sim, ok, _, cache_violations = long_run
    _detail(criterion, f"{ok} ok lifecycles, non-zero cache sums {cache_violations}")
    assert ok == 1000 and cache_violations == 0


def test_c10_scaling_trend(criterion):
    criterion("C10 scaling trend: makespan proxy at 1/2/5/10 workers")
    cfg = SimulationConfig(
        datasets=[{"table": "lineitem", "owner": "alice", "generator": "lineitem", "rows": 1000, "seed": 10}],
        workload=[("alice", "SELECT l_returnflag, l_linestatus, SUM(l_quantity), SUM(l_extendedprice), AVG(l_discount), COUNT(*) FROM lineitem WHERE l_shipdate <= DATE '1998-09-02' GROUP BY l_returnflag, l_linestatus ORDER BY l_returnflag, l_linestatus")],
        scaling_worker_counts=[1, 2, 5, 10],
    )
    data = simulate(cfg).data
    spans = [data["makespan_by_worker_count"][str(k)] for k in (1, 2, 5, 10)]
    _detail(criterion, f"makespan {spans}")
    assert data["status_counts"] == {"ok": 1}
    assert all(a > b for a, b in zip(spans, spans[1:]))


def test_c11_determinism(criterion):
    criterion("C11 determinism: byte-identical report JSON")
    cfg = SimulationConfig(
        datasets=[
            {"table": "lineitem", "owner": "alice", "generator": "lineitem", "rows": 300, "seed": 11},
            {"table": "orders", "owner": "bob", "generator": "orders", "rows": 80, "seed": 12},
        ],
        grants=[{"owner": "bob", "grantee": "alice", "table": "orders"}],
        workload=[
            ("alice", "SELECT l_linestatus, COUNT(*) FROM lineitem GROUP BY l_linestatus"),
            ("bob", "SELECT * FROM lineitem"),
            ("alice", "SELECT o_orderstatus, MAX(o_totalprice) FROM lineitem JOIN orders ON l_orderkey = o_orderkey GROUP BY o_orderstatus"),
            ("bob", "INSERT INTO orders VALUES (81, 2, 'F', 99.5, DATE '1996-03-04', '2-HIGH')"),
            ("alice", "SELECT COUNT(*) FROM orders"),
        ]
        * 4,
    )
    a, b = simulate(cfg).to_json(), simulate(cfg).to_json()
    _detail(criterion, f"{len(a)} bytes, {a.count(chr(10))} lines")
    assert a.encode() == b.encode()
