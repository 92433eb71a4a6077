"""The SQL subset: parse, plan across workers, merge, and compare with a single-node run."""

from web3db import datasets
from web3db.engine import execute_partitioned, parse, plan, reference_execute

tables = {
    "lineitem": datasets.generate("lineitem", 600, seed=2),
    "orders": datasets.generate("orders", 150, seed=2),
}
sql = (
    "SELECT o_orderpriority, COUNT(*), AVG(l_quantity) FROM lineitem "
    "JOIN orders ON l_orderkey = o_orderkey WHERE l_discount >= 0.05 "
    "GROUP BY o_orderpriority ORDER BY o_orderpriority"
)
stmt = parse(sql)
print("round-tripped SQL:", stmt.sql())

p = plan(stmt, tables, 4)
print(f"probe {p.probe_table}, broadcast {p.broadcast_table}, partitions {p.partition_sizes}")

distributed, _ = execute_partitioned(stmt, tables, 4)
single = reference_execute(stmt, tables)
print(distributed.columns)
for row in distributed.rows:
    print(" ", row)
print("matches single-node execution:", distributed.rows == single.rows)
