"""One query end to end: authorize, gossip, elect, execute, seal, update the ledger, purge."""

from web3db.orchestrator import Simulation, SimulationConfig

cfg = SimulationConfig(
    datasets=[
        {"table": "lineitem", "owner": "alice", "generator": "lineitem", "rows": 400, "seed": 3},
        {"table": "orders", "owner": "bob", "generator": "orders", "rows": 300, "seed": 3},
    ],
    grants=[{"owner": "bob", "grantee": "alice", "table": "orders", "blocks": [0]}],
)
sim = Simulation(cfg)
alice = sim.users["alice"]

queries = [
    "SELECT l_returnflag, SUM(l_quantity) FROM lineitem GROUP BY l_returnflag",
    "SELECT COUNT(*) FROM orders",  # only the granted first row block is visible
    "SELECT COUNT(*) FROM lineitem",
    "INSERT INTO lineitem VALUES (1, 7, 5, 100.00, 0.02, 'N', 'O', DATE '1998-01-01')",
]
for sql in queries:
    lc = sim.submit(alice, sql)
    s = lc.summary(sim.node_index)
    print(f"round {s['round']}: {s['status']}  master={s['master']} workers={s['workers']} retries={s['retries']}")
    print(f"  sql: {sql}")
    if lc.result is not None:
        print(f"  result: {lc.result.rows[:4]}")
    print(f"  cache bytes after purge: {s['cache_bytes_after']}")
    print("  weights:", [sim.ledger.weight(n.pk) for n in sim.nodes])

lc = sim.submit(sim.users["bob"], "SELECT * FROM lineitem")
print(f"round {lc.round}: bob reading alice's table -> {lc.status}")
print("final lineitem rows:", len(sim.table("lineitem")))
