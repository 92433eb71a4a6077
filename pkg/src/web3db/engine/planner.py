"""Name resolution, type checking and partitioned execution plans."""

from __future__ import annotations

import datetime as dt
from dataclasses import dataclass
from decimal import Decimal
from typing import Any, Mapping

from ..errors import PlanningError
from ..storage import Column, Table
from .ast import Aggregate, ColumnRef, Select, Star

NUMERIC = ("integer", "decimal")


@dataclass(frozen=True)
class TableStats:
    schema: tuple[Column, ...]
    row_count: int


@dataclass(frozen=True)
class Output:
    """One result column: a source column, a group key slot or an aggregate slot."""

    kind: str  # "column" | "group" | "agg"
    index: int
    name: str
    type: str


@dataclass(frozen=True)
class BoundQuery:
    stmt: Select
    left_table: str
    right_table: str | None
    left_width: int
    columns: tuple[Column, ...]
    join_keys: tuple[int, int] | None
    predicates: tuple[tuple[int, str, Any], ...]
    aggregate: bool
    group_indices: tuple[int, ...]
    aggregates: tuple[tuple[str, int | None, str], ...]
    outputs: tuple[Output, ...]
    # Row queries sort on source-column indices, aggregate queries on output positions.
    order: tuple[tuple[int, bool], ...]
    limit: int | None

    @property
    def output_names(self) -> tuple[str, ...]:
        return tuple(o.name for o in self.outputs)

    @property
    def output_types(self) -> tuple[str, ...]:
        return tuple(o.type for o in self.outputs)


def _stats(t: Table | TableStats) -> TableStats:
    if isinstance(t, TableStats):
        return t
    return TableStats(t.schema, len(t.rows))


def _coerce_literal(value: Any, type_: str, where: str) -> Any:
    if type_ in NUMERIC:
        if isinstance(value, (int, Decimal)) and not isinstance(value, bool):
            return value
    elif type_ == "text":
        if isinstance(value, str):
            return value
    elif type_ == "date":
        if isinstance(value, dt.date):
            return value
        if isinstance(value, str):
            try:
                return dt.date.fromisoformat(value)
            except ValueError:
                pass
    raise PlanningError(f"{where}: literal {value!r} does not match column type {type_}")


def _aggregate_type(func: str, arg_type: str | None) -> str:
    if func == "count":
        return "integer"
    if func == "avg":
        return "decimal"
    if func == "sum":
        return "integer" if arg_type == "integer" else "decimal"
    return arg_type  # min / max


def bind(stmt: Select, tables: Mapping[str, Table | TableStats]) -> BoundQuery:
    if not isinstance(stmt, Select):
        raise PlanningError("only SELECT statements can be planned")
    sides = [stmt.source] + ([stmt.join.table] if stmt.join else [])
    scope: list[tuple[set[str], Column]] = []
    widths = []
    for ref in sides:
        if ref.name not in tables:
            raise PlanningError(f"unknown table {ref.name}")
        schema = _stats(tables[ref.name]).schema
        qualifiers = {ref.name.casefold()} | ({ref.alias.casefold()} if ref.alias else set())
        scope += [(qualifiers, c) for c in schema]
        widths.append(len(schema))
    columns = tuple(c for _, c in scope)

    def resolve(ref: ColumnRef) -> int:
        hits = [
            i
            for i, (quals, col) in enumerate(scope)
            if col.name.casefold() == ref.name.casefold()
            and (ref.table is None or ref.table.casefold() in quals)
        ]
        if not hits:
            raise PlanningError(f"unknown column {ref.sql()}")
        if len(hits) > 1:
            raise PlanningError(f"ambiguous column {ref.sql()}")
        return hits[0]

    join_keys = None
    if stmt.join:
        a, b = resolve(stmt.join.left), resolve(stmt.join.right)
        left_width = widths[0]
        if a >= left_width and b < left_width:
            a, b = b, a
        if not (a < left_width <= b):
            raise PlanningError("join condition must compare one column from each table")
        ta, tb = columns[a].type, columns[b].type
        if ta != tb and not (ta in NUMERIC and tb in NUMERIC):
            raise PlanningError(f"join keys have incompatible types {ta} and {tb}")
        join_keys = (a, b - left_width)

    predicates = []
    for cmp in stmt.where:
        i = resolve(cmp.column)
        value = _coerce_literal(cmp.literal.value, columns[i].type, cmp.sql())
        predicates.append((i, cmp.op, value))

    aggregate = stmt.has_aggregates or bool(stmt.group_by)
    group_indices = tuple(resolve(c) for c in stmt.group_by)
    aggregates: list[tuple[str, int | None, str]] = []

    def agg_slot(agg: Aggregate) -> int:
        idx = None if agg.arg is None else resolve(agg.arg)
        arg_type = None if idx is None else columns[idx].type
        if agg.func in ("sum", "avg") and arg_type not in NUMERIC:
            raise PlanningError(f"{agg.sql()} needs a numeric column")
        entry = (agg.func, idx, _aggregate_type(agg.func, arg_type))
        if entry not in aggregates:
            aggregates.append(entry)
        return aggregates.index(entry)

    outputs: list[Output] = []
    item_pos: list[int] = []
    for item in stmt.items:
        item_pos.append(len(outputs))
        expr = item.expr
        if isinstance(expr, Star):
            if aggregate:
                raise PlanningError("SELECT * cannot be combined with aggregation")
            outputs += [Output("column", i, c.name, c.type) for i, c in enumerate(columns)]
            continue
        name = item.alias or (expr.name if isinstance(expr, ColumnRef) else expr.sql().lower())
        if isinstance(expr, Aggregate):
            slot = agg_slot(expr)
            outputs.append(Output("agg", slot, name, aggregates[slot][2]))
            continue
        i = resolve(expr)
        if aggregate:
            if i not in group_indices:
                raise PlanningError(f"column {expr.sql()} must appear in GROUP BY")
            outputs.append(Output("group", group_indices.index(i), name, columns[i].type))
        else:
            outputs.append(Output("column", i, name, columns[i].type))

    order = []
    for item in stmt.order_by:
        expr = item.expr
        pos = None
        if isinstance(expr, ColumnRef) and expr.table is None:
            aliased = [k for k, it in enumerate(stmt.items) if it.alias and it.alias.casefold() == expr.name.casefold()]
            if aliased:
                pos = item_pos[aliased[0]]
        if pos is not None:
            out = outputs[pos]
            if aggregate:
                order.append((pos, item.descending))
            else:
                order.append((out.index, item.descending))
            continue
        if isinstance(expr, Aggregate):
            if not aggregate:
                raise PlanningError("aggregate in ORDER BY of a non-aggregate query")
            slot = agg_slot(expr)
            matches = [k for k, o in enumerate(outputs) if o.kind == "agg" and o.index == slot]
            if not matches:
                raise PlanningError(f"ORDER BY {expr.sql()} must appear in the select list")
            order.append((matches[0], item.descending))
            continue
        i = resolve(expr)
        if not aggregate:
            order.append((i, item.descending))
            continue
        matches = [
            k for k, o in enumerate(outputs) if o.kind == "group" and group_indices[o.index] == i
        ]
        if not matches:
            raise PlanningError(f"ORDER BY {expr.sql()} must appear in the select list")
        order.append((matches[0], item.descending))

    if stmt.limit is not None and stmt.limit < 0:
        raise PlanningError("LIMIT must be non-negative")

    return BoundQuery(
        stmt=stmt,
        left_table=stmt.source.name,
        right_table=stmt.join.table.name if stmt.join else None,
        left_width=widths[0],
        columns=columns,
        join_keys=join_keys,
        predicates=tuple(predicates),
        aggregate=aggregate,
        group_indices=group_indices,
        aggregates=tuple(aggregates),
        outputs=tuple(outputs),
        order=tuple(order),
        limit=stmt.limit,
    )


@dataclass(frozen=True)
class WorkerFragment:
    index: int
    query: BoundQuery
    probe_side: str  # "left" | "right"
    start: int
    stop: int

    @property
    def size(self) -> int:
        return self.stop - self.start


@dataclass(frozen=True)
class ExecutionPlan:
    query: BoundQuery
    probe_table: str
    broadcast_table: str | None
    probe_side: str
    fragments: tuple[WorkerFragment, ...]
    broadcast_rows: int = 0

    @property
    def partitions(self) -> list[range]:
        return [range(f.start, f.stop) for f in self.fragments]

    @property
    def partition_sizes(self) -> list[int]:
        return [f.size for f in self.fragments]

    def row_costs(self) -> list[int]:
        """Rows each worker touches: its probe partition plus the broadcast side."""
        return [f.size + self.broadcast_rows for f in self.fragments]

    def makespan(self) -> int:
        return max(self.row_costs())


def balanced_ranges(n: int, parts: int) -> list[tuple[int, int]]:
    """Split ``range(n)`` into ``parts`` contiguous ranges whose sizes differ by at most one."""
    if parts < 1:
        raise ValueError("need at least one part")
    base, extra = divmod(n, parts)
    out, start = [], 0
    for k in range(parts):
        size = base + (1 if k < extra else 0)
        out.append((start, start + size))
        start += size
    return out


def plan(stmt: Select, tables: Mapping[str, Table | TableStats], worker_count: int) -> ExecutionPlan:
    if worker_count < 1:
        raise PlanningError("worker_count must be at least 1")
    q = bind(stmt, tables)
    probe_table, broadcast_table, probe_side = q.left_table, None, "left"
    broadcast_rows = 0
    if q.right_table is not None:
        left_n = _stats(tables[q.left_table]).row_count
        right_n = _stats(tables[q.right_table]).row_count
        if left_n < right_n:
            probe_table, broadcast_table, probe_side = q.right_table, q.left_table, "right"
            broadcast_rows = left_n
        else:
            broadcast_table = q.right_table
            broadcast_rows = right_n
    n = _stats(tables[probe_table]).row_count
    fragments = tuple(
        WorkerFragment(k, q, probe_side, a, b)
        for k, (a, b) in enumerate(balanced_ranges(n, worker_count))
    )
    return ExecutionPlan(q, probe_table, broadcast_table, probe_side, fragments, broadcast_rows)


def check_partitions(plan_: ExecutionPlan, row_count: int) -> None:
    """Assert the fragments tile ``range(row_count)`` with sizes within one row."""
    covered: list[int] = []
    for f in plan_.fragments:
        covered.extend(range(f.start, f.stop))
    if sorted(covered) != list(range(row_count)) or len(covered) != len(set(covered)):
        raise AssertionError("partitions are not a disjoint cover of the probe side")
    sizes = plan_.partition_sizes
    if max(sizes) - min(sizes) > 1:
        raise AssertionError(f"unbalanced partitions {sizes}")

