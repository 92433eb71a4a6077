"""SQL-subset engine: parser, planner, partitioned executor and reference oracle."""

from .ast import to_sql
from .executor import (
    CacheRegistry,
    PartialResult,
    PurgeReport,
    QueryResult,
    apply_insert,
    create_table,
    execute_partitioned,
    merge,
    purge_caches,
    reference_execute,
    worker_execute,
)
from .parser import parse
from .planner import ExecutionPlan, TableStats, WorkerFragment, bind, plan

__all__ = [
    "CacheRegistry",
    "ExecutionPlan",
    "PartialResult",
    "PurgeReport",
    "QueryResult",
    "TableStats",
    "WorkerFragment",
    "apply_insert",
    "bind",
    "create_table",
    "execute_partitioned",
    "merge",
    "parse",
    "plan",
    "purge_caches",
    "reference_execute",
    "to_sql",
    "worker_execute",
]
