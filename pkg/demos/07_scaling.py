"""Makespan proxy for a scan-aggregate as the worker count grows."""

from web3db.orchestrator import SimulationConfig, simulate

cfg = SimulationConfig(
    datasets=[{"table": "lineitem", "owner": "alice", "generator": "lineitem", "rows": 2000, "seed": 4}],
    workload=[("alice", "SELECT l_returnflag, l_linestatus, SUM(l_extendedprice), COUNT(*) FROM lineitem GROUP BY l_returnflag, l_linestatus")],
    scaling_worker_counts=[1, 2, 5, 10],
)
report = simulate(cfg).data
for k, span in report["makespan_by_worker_count"].items():
    print(f"{k:>3} workers: max per-worker rows {span:>5}  {'#' * (span // 50)}")
