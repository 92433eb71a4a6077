"""Partitioned master/worker execution, the single-node reference executor,
and the per-node cache registry that is emptied after every query.

Result order is always defined: rows are sorted by the ORDER BY keys and
ties (or every row, when there is no ORDER BY) fall back to full-row
lexicographic order, with NULL sorting first. LIMIT applies after sorting,
so partitioned and single-node execution return the same sequence.
"""

from __future__ import annotations

import csv
import io
import json
import operator
from dataclasses import dataclass, field
from decimal import ROUND_HALF_EVEN, Decimal
from functools import cmp_to_key
from typing import Any, Callable, Iterable, Mapping, Sequence

from ..errors import IncompleteError, PlanningError, RefusalError
from ..storage import (
    DECIMAL_QUANTUM,
    ContentHash,
    Table,
    coerce_value,
    encode_rows,
    parse_value,
    render_value,
)
from .ast import CreateTable, Insert, Select
from .planner import BoundQuery, ExecutionPlan, WorkerFragment, bind, plan

_OPS: dict[str, Callable[[Any, Any], bool]] = {
    "=": operator.eq,
    "<>": operator.ne,
    "<": operator.lt,
    ">": operator.gt,
    "<=": operator.le,
    ">=": operator.ge,
}


# -- results ----------------------------------------------------------------


@dataclass(frozen=True)
class QueryResult:
    columns: tuple[str, ...]
    types: tuple[str, ...]
    rows: tuple[tuple, ...]

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\r\n")
        writer.writerow(self.columns)
        for row in self.rows:
            writer.writerow(["" if v is None else render_value(v) for v in row])
        return buf.getvalue()

    def json_rows(self) -> list[dict[str, Any]]:
        return [
            {c: None if v is None else _json_value(v) for c, v in zip(self.columns, row)}
            for row in self.rows
        ]

    def to_json(self) -> str:
        return json.dumps(self.json_rows(), ensure_ascii=False)

    def to_bytes(self) -> bytes:
        body = {
            "columns": list(self.columns),
            "types": list(self.types),
            "rows": [[None if v is None else render_value(v) for v in row] for row in self.rows],
        }
        return json.dumps(body, sort_keys=True, separators=(",", ":")).encode()

    @classmethod
    def from_bytes(cls, data: bytes) -> QueryResult:
        body = json.loads(data)
        types = tuple(body["types"])
        rows = tuple(
            tuple(None if v is None else parse_value(v, t) for v, t in zip(row, types))
            for row in body["rows"]
        )
        return cls(tuple(body["columns"]), types, rows)


def _json_value(v: Any) -> Any:
    if isinstance(v, int) and not isinstance(v, bool):
        return v
    return render_value(v)


# -- ordering ---------------------------------------------------------------


def compare_values(a: Any, b: Any) -> int:
    if a is None or b is None:
        return (a is not None) - (b is not None)
    return (a > b) - (a < b)


def compare_rows(a: Sequence, b: Sequence) -> int:
    for x, y in zip(a, b):
        c = compare_values(x, y)
        if c:
            return c
    return len(a) - len(b)


def finish(pairs: Iterable[tuple[tuple, tuple]], descending: Sequence[bool], limit: int | None) -> list[tuple]:
    """Sort ``(order_key, row)`` pairs and apply LIMIT."""

    def cmp(p, q):
        for x, y, desc in zip(p[0], q[0], descending):
            c = compare_values(x, y)
            if c:
                return -c if desc else c
        return compare_rows(p[1], q[1])

    ordered = sorted(pairs, key=cmp_to_key(cmp))
    rows = [row for _, row in ordered]
    return rows if limit is None else rows[:limit]


# -- aggregation state ------------------------------------------------------


def _zero(type_: str):
    return 0 if type_ == "integer" else Decimal("0.0000")


def init_state(func: str, arg_type: str | None) -> list:
    if func == "count":
        return [0]
    if func in ("sum", "avg"):
        return [_zero(arg_type), 0]
    return [None]


def update_state(func: str, state: list, value: Any):
    if func == "count":
        state[0] += 1
    elif func in ("sum", "avg"):
        state[0] += value
        state[1] += 1
    elif func == "min":
        if state[0] is None or value < state[0]:
            state[0] = value
    else:
        if state[0] is None or value > state[0]:
            state[0] = value


def combine_state(func: str, into: list, other: list):
    if func == "count":
        into[0] += other[0]
    elif func in ("sum", "avg"):
        into[0] += other[0]
        into[1] += other[1]
    elif other[0] is not None:
        update_state(func, into, other[0])


def average(total: Any, count: int) -> Decimal | None:
    if count == 0:
        return None
    return (Decimal(total) / count).quantize(DECIMAL_QUANTUM, rounding=ROUND_HALF_EVEN)


def finalize_state(func: str, state: list) -> Any:
    if func == "count":
        return state[0]
    if func == "sum":
        return state[0] if state[1] else None
    if func == "avg":
        return average(state[0], state[1])
    return state[0]


# -- worker side ------------------------------------------------------------


@dataclass
class CacheRegistry:
    """Blocks a node currently holds in working memory, by content hash."""

    entries: dict[ContentHash, int] = field(default_factory=dict)

    def register(self, h: ContentHash, size: int):
        self.entries[h] = size

    def hold_rows(self, rows: Sequence[tuple]) -> ContentHash | None:
        if not rows:
            return None
        block = encode_rows(rows)
        h = ContentHash.of(block)
        self.register(h, len(block))
        return h

    @property
    def total_bytes(self) -> int:
        return sum(self.entries.values())

    def purge(self) -> int:
        freed = self.total_bytes
        self.entries.clear()
        return freed

    def __len__(self) -> int:
        return len(self.entries)


@dataclass
class PartialResult:
    fragment_index: int
    rows: list[tuple[tuple, tuple]] | None = None
    groups: dict[tuple, list[list]] | None = None
    rows_scanned: int = 0
    forced_purge_bytes: int = 0


def joined_rows(
    q: BoundQuery, probe_rows: Sequence[tuple], broadcast_rows: Sequence[tuple], probe_side: str
) -> Iterable[tuple]:
    if q.join_keys is None:
        yield from probe_rows
        return
    left_key, right_key = q.join_keys
    probe_key, build_key = (left_key, right_key) if probe_side == "left" else (right_key, left_key)
    index: dict[Any, list[tuple]] = {}
    for row in broadcast_rows:
        index.setdefault(row[build_key], []).append(row)
    for row in probe_rows:
        for match in index.get(row[probe_key], ()):
            yield row + match if probe_side == "left" else match + row


def _passes(q: BoundQuery, row: tuple) -> bool:
    return all(_OPS[op](row[i], v) for i, op, v in q.predicates)


def worker_execute(
    fragment: WorkerFragment,
    partition_rows: Sequence[tuple],
    broadcast_rows: Sequence[tuple] = (),
    *,
    registry: CacheRegistry | None = None,
    consensus_ok: bool = True,
) -> PartialResult:
    """Run one plan fragment: scan, filter, join, then project or pre-aggregate."""
    if not consensus_ok:
        raise RefusalError(f"fragment {fragment.index}: consensus proof rejected")
    forced = 0
    if registry is not None:
        # Leftovers mean this node skipped a purge on an earlier term.
        if len(registry):
            forced = registry.purge()
        registry.hold_rows(partition_rows)
        registry.hold_rows(broadcast_rows)
    q = fragment.query
    matching = (r for r in joined_rows(q, partition_rows, broadcast_rows, fragment.probe_side) if _passes(q, r))
    partial = PartialResult(fragment.index, rows_scanned=len(partition_rows), forced_purge_bytes=forced)
    if not q.aggregate:
        partial.rows = [
            (tuple(r[i] for i, _ in q.order), tuple(r[o.index] for o in q.outputs)) for r in matching
        ]
        return partial
    groups: dict[tuple, list[list]] = {}
    for r in matching:
        key = tuple(r[i] for i in q.group_indices)
        states = groups.get(key)
        if states is None:
            states = groups[key] = [init_state(f, _arg_type(q, i)) for f, i, _ in q.aggregates]
        for (func, idx, _), state in zip(q.aggregates, states):
            update_state(func, state, None if idx is None else r[idx])
    partial.groups = groups
    return partial


def _arg_type(q: BoundQuery, idx: int | None) -> str | None:
    return None if idx is None else q.columns[idx].type


# -- master side ------------------------------------------------------------


def _aggregate_rows(q: BoundQuery, groups: Mapping[tuple, Sequence[Any]]) -> list[tuple[tuple, tuple]]:
    """Turn finalized per-group aggregate values into ``(order_key, row)`` pairs."""
    pairs = []
    for key, values in groups.items():
        row = tuple(key[o.index] if o.kind == "group" else values[o.index] for o in q.outputs)
        pairs.append((tuple(row[pos] for pos, _ in q.order), row))
    return pairs


def merge(partials: Sequence[PartialResult | None], plan_: ExecutionPlan) -> QueryResult:
    q = plan_.query
    expected = len(plan_.fragments)
    got = {p.fragment_index for p in partials if p is not None}
    if len(partials) != expected or got != set(range(expected)):
        missing = sorted(set(range(expected)) - got)
        raise IncompleteError(f"missing partial results for fragments {missing}")
    descending = [d for _, d in q.order]
    ordered = sorted(partials, key=lambda p: p.fragment_index)
    if not q.aggregate:
        pairs = [pair for p in ordered for pair in p.rows]
    else:
        merged: dict[tuple, list[list]] = {}
        for p in ordered:
            for key, states in p.groups.items():
                if key not in merged:
                    merged[key] = [list(s) for s in states]
                else:
                    for (func, _, _), into, other in zip(q.aggregates, merged[key], states):
                        combine_state(func, into, other)
        if not q.group_indices and () not in merged:
            merged[()] = [init_state(f, _arg_type(q, i)) for f, i, _ in q.aggregates]
        finals = {
            key: [finalize_state(f, s) for (f, _, _), s in zip(q.aggregates, states)]
            for key, states in merged.items()
        }
        pairs = _aggregate_rows(q, finals)
    return QueryResult(q.output_names, q.output_types, tuple(finish(pairs, descending, q.limit)))


def reference_execute(stmt: Select, tables: Mapping[str, Table]) -> QueryResult:
    """Single-node evaluation: nested-loop join, filter, group, aggregate, sort."""
    q = bind(stmt, tables)
    left = tables[q.left_table].rows
    if q.right_table is None:
        rows = list(left)
    else:
        right = tables[q.right_table].rows
        lk, rk = q.join_keys
        rows = [l + r for l in left for r in right if l[lk] == r[rk]]
    rows = [r for r in rows if all(_OPS[op](r[i], v) for i, op, v in q.predicates)]
    descending = [d for _, d in q.order]
    if not q.aggregate:
        pairs = [(tuple(r[i] for i, _ in q.order), tuple(r[o.index] for o in q.outputs)) for r in rows]
        return QueryResult(q.output_names, q.output_types, tuple(finish(pairs, descending, q.limit)))
    buckets: dict[tuple, list[tuple]] = {}
    for r in rows:
        buckets.setdefault(tuple(r[i] for i in q.group_indices), []).append(r)
    if not q.group_indices:
        buckets.setdefault((), [])
    finals = {}
    for key, members in buckets.items():
        values = []
        for func, idx, _ in q.aggregates:
            column = [m[idx] for m in members] if idx is not None else members
            if func == "count":
                values.append(len(column))
            elif not column:
                values.append(None)
            elif func == "sum":
                values.append(sum(column[1:], column[0]))
            elif func == "avg":
                values.append(average(sum(column[1:], column[0]), len(column)))
            elif func == "min":
                values.append(min(column))
            else:
                values.append(max(column))
        finals[key] = values
    pairs = _aggregate_rows(q, finals)
    return QueryResult(q.output_names, q.output_types, tuple(finish(pairs, descending, q.limit)))


def execute_partitioned(
    stmt: Select,
    tables: Mapping[str, Table],
    worker_count: int,
    registries: Sequence[CacheRegistry] | None = None,
) -> tuple[QueryResult, ExecutionPlan]:
    """In-process master/worker run: plan, execute every fragment, merge."""
    p = plan(stmt, tables, worker_count)
    probe = tables[p.probe_table].rows
    broadcast = tables[p.broadcast_table].rows if p.broadcast_table else ()
    partials = []
    for f in p.fragments:
        reg = registries[f.index] if registries is not None else None
        partials.append(worker_execute(f, probe[f.start : f.stop], broadcast, registry=reg))
    return merge(partials, p), p


# -- purge ------------------------------------------------------------------


@dataclass
class PurgeReport:
    freed: dict[Any, int]
    order: list[Any]
    residual: dict[Any, int] = field(default_factory=dict)

    @property
    def total_freed(self) -> int:
        return sum(self.freed.values())


def purge_caches(
    registries: Mapping[Any, CacheRegistry],
    node_ids: Iterable[Any],
    master_id: Any = None,
    skip_master: bool = False,
) -> PurgeReport:
    """Empty every listed node's registry, the master's last.

    ``skip_master`` models a master that ignores its own purge; whatever it
    still holds is reported in ``residual``.
    """
    report = PurgeReport({}, [])
    for node in node_ids:
        if node == master_id:
            continue
        report.freed[node] = registries[node].purge()
        report.order.append(node)
    if master_id is not None:
        if skip_master:
            report.residual[master_id] = registries[master_id].total_bytes
        else:
            report.freed[master_id] = registries[master_id].purge()
            report.order.append(master_id)
    return report


# -- data definition / modification ---------------------------------------


def create_table(stmt: CreateTable) -> Table:
    return Table(tuple(stmt.columns), ())


def apply_insert(stmt: Insert, table: Table) -> Table:
    names = [c.name.casefold() for c in table.schema]
    if stmt.columns is None:
        order = list(range(len(names)))
    else:
        wanted = [c.casefold() for c in stmt.columns]
        unknown = [c for c in stmt.columns if c.casefold() not in names]
        if unknown:
            raise PlanningError(f"unknown column(s) {unknown} in INSERT")
        if sorted(wanted) != sorted(names):
            raise PlanningError("INSERT must supply every column (NULL is not supported)")
        order = [wanted.index(n) for n in names]
    new_rows = []
    for row in stmt.rows:
        if len(row) != len(order):
            raise PlanningError(f"INSERT row has {len(row)} values, expected {len(order)}")
        try:
            new_rows.append(
                tuple(coerce_value(row[k].value, c.type) for k, c in zip(order, table.schema))
            )
        except TypeError as exc:
            raise PlanningError(f"INSERT value type mismatch: {exc}") from None
    return table.with_rows(table.rows + tuple(new_rows))

