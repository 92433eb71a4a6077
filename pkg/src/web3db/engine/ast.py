"""Syntax tree for the supported SQL subset, plus a printer back to SQL."""

from __future__ import annotations

import datetime as dt
from dataclasses import dataclass
from decimal import Decimal
from typing import Any, Union

from ..storage import Column

AGGREGATES = ("sum", "count", "min", "max", "avg")
COMPARISONS = ("=", "<>", "<", ">", "<=", ">=")


@dataclass(frozen=True)
class ColumnRef:
    name: str
    table: str | None = None

    def sql(self) -> str:
        return f"{self.table}.{self.name}" if self.table else self.name


@dataclass(frozen=True)
class Literal:
    value: Any

    def sql(self) -> str:
        v = self.value
        if isinstance(v, str):
            return "'" + v.replace("'", "''") + "'"
        if isinstance(v, dt.date):
            return f"DATE '{v.isoformat()}'"
        if isinstance(v, Decimal):
            return format(v, "f")
        return str(v)


@dataclass(frozen=True)
class Aggregate:
    func: str
    arg: ColumnRef | None  # None means COUNT(*)

    def sql(self) -> str:
        inner = "*" if self.arg is None else self.arg.sql()
        return f"{self.func.upper()}({inner})"


@dataclass(frozen=True)
class Star:
    def sql(self) -> str:
        return "*"


Expr = Union[ColumnRef, Aggregate, Star]


@dataclass(frozen=True)
class SelectItem:
    expr: Expr
    alias: str | None = None

    def sql(self) -> str:
        return self.expr.sql() + (f" AS {self.alias}" if self.alias else "")


@dataclass(frozen=True)
class TableRef:
    name: str
    alias: str | None = None

    def sql(self) -> str:
        return self.name + (f" AS {self.alias}" if self.alias else "")


@dataclass(frozen=True)
class Comparison:
    column: ColumnRef
    op: str
    literal: Literal

    def sql(self) -> str:
        return f"{self.column.sql()} {self.op} {self.literal.sql()}"


@dataclass(frozen=True)
class Join:
    table: TableRef
    left: ColumnRef
    right: ColumnRef

    def sql(self) -> str:
        return f"JOIN {self.table.sql()} ON {self.left.sql()} = {self.right.sql()}"


@dataclass(frozen=True)
class OrderItem:
    expr: ColumnRef | Aggregate
    descending: bool = False

    def sql(self) -> str:
        return self.expr.sql() + (" DESC" if self.descending else " ASC")


@dataclass(frozen=True)
class Select:
    items: tuple[SelectItem, ...]
    source: TableRef
    join: Join | None = None
    where: tuple[Comparison, ...] = ()
    group_by: tuple[ColumnRef, ...] = ()
    order_by: tuple[OrderItem, ...] = ()
    limit: int | None = None

    kind = "select"

    @property
    def tables(self) -> list[str]:
        names = [self.source.name]
        if self.join is not None:
            names.append(self.join.table.name)
        return names

    @property
    def has_aggregates(self) -> bool:
        return any(isinstance(i.expr, Aggregate) for i in self.items)

    def sql(self) -> str:
        parts = ["SELECT " + ", ".join(i.sql() for i in self.items), "FROM " + self.source.sql()]
        if self.join:
            parts.append(self.join.sql())
        if self.where:
            parts.append("WHERE " + " AND ".join(c.sql() for c in self.where))
        if self.group_by:
            parts.append("GROUP BY " + ", ".join(c.sql() for c in self.group_by))
        if self.order_by:
            parts.append("ORDER BY " + ", ".join(o.sql() for o in self.order_by))
        if self.limit is not None:
            parts.append(f"LIMIT {self.limit}")
        return " ".join(parts)


@dataclass(frozen=True)
class CreateTable:
    name: str
    columns: tuple[Column, ...]

    kind = "create_table"

    @property
    def tables(self) -> list[str]:
        return [self.name]

    def sql(self) -> str:
        cols = ", ".join(f"{c.name} {c.type.upper()}" for c in self.columns)
        return f"CREATE TABLE {self.name} ({cols})"


@dataclass(frozen=True)
class Insert:
    table: str
    columns: tuple[str, ...] | None
    rows: tuple[tuple[Literal, ...], ...]

    kind = "insert"

    @property
    def tables(self) -> list[str]:
        return [self.table]

    def sql(self) -> str:
        cols = f" ({', '.join(self.columns)})" if self.columns else ""
        values = ", ".join("(" + ", ".join(v.sql() for v in row) + ")" for row in self.rows)
        return f"INSERT INTO {self.table}{cols} VALUES {values}"


Statement = Union[Select, CreateTable, Insert]


def to_sql(stmt: Statement) -> str:
    return stmt.sql()
