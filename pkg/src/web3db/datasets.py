"""Deterministic TPC-H-like fixture tables."""

from __future__ import annotations

import datetime as dt
import random
from decimal import Decimal

from .storage import Column, Table

LINEITEM_SCHEMA = (
    Column("l_orderkey", "integer"),
    Column("l_partkey", "integer"),
    Column("l_quantity", "integer"),
    Column("l_extendedprice", "decimal"),
    Column("l_discount", "decimal"),
    Column("l_returnflag", "text"),
    Column("l_linestatus", "text"),
    Column("l_shipdate", "date"),
)

ORDERS_SCHEMA = (
    Column("o_orderkey", "integer"),
    Column("o_custkey", "integer"),
    Column("o_orderstatus", "text"),
    Column("o_totalprice", "decimal"),
    Column("o_orderdate", "date"),
    Column("o_orderpriority", "text"),
)

NATION_SCHEMA = (
    Column("n_nationkey", "integer"),
    Column("n_name", "text"),
    Column("n_regionkey", "integer"),
)

_EPOCH = dt.date(1992, 1, 1)
_PRIORITIES = ("1-URGENT", "2-HIGH", "3-MEDIUM", "4-NOT SPECIFIED", "5-LOW")
_NATIONS = (
    "ALGERIA", "ARGENTINA", "BRAZIL", "CANADA", "EGYPT", "ETHIOPIA", "FRANCE",
    "GERMANY", "INDIA", "INDONESIA", "IRAN", "IRAQ", "JAPAN", "JORDAN", "KENYA",
    "MOROCCO", "MOZAMBIQUE", "PERU", "CHINA", "ROMANIA", "SAUDI ARABIA",
    "VIETNAM", "RUSSIA", "UNITED KINGDOM", "UNITED STATES",
)


def _cents(rng: random.Random, lo: int, hi: int) -> Decimal:
    return Decimal(rng.randint(lo, hi)) / 100


def lineitem(rows: int, seed: int = 0, orders: int | None = None) -> Table:
    rng = random.Random(seed)
    orders = orders or max(1, rows // 4)
    out = []
    for _ in range(rows):
        qty = rng.randint(1, 50)
        out.append(
            (
                rng.randint(1, orders),
                rng.randint(1, 200),
                qty,
                _cents(rng, 90_000, 10_000_000),
                _cents(rng, 0, 10),
                rng.choice("ANR"),
                rng.choice("OF"),
                _EPOCH + dt.timedelta(days=rng.randint(0, 2400)),
            )
        )
    return Table(LINEITEM_SCHEMA, tuple(out))


def orders(rows: int, seed: int = 0) -> Table:
    rng = random.Random(seed)
    out = [
        (
            k,
            rng.randint(1, max(1, rows // 10)),
            rng.choice("OFP"),
            _cents(rng, 100_000, 50_000_000),
            _EPOCH + dt.timedelta(days=rng.randint(0, 2400)),
            rng.choice(_PRIORITIES),
        )
        for k in range(1, rows + 1)
    ]
    return Table(ORDERS_SCHEMA, tuple(out))


def nation() -> Table:
    return Table(NATION_SCHEMA, tuple((i, n, i % 5) for i, n in enumerate(_NATIONS)))


GENERATORS = {"lineitem": lineitem, "orders": orders}


def generate(name: str, rows: int, seed: int = 0) -> Table:
    if name == "nation":
        return nation()
    try:
        return GENERATORS[name](rows, seed)
    except KeyError:
        raise ValueError(f"unknown generator {name!r}") from None
