"""Random typed tables shared by storage, engine and acceptance tests."""

from __future__ import annotations

import datetime as dt
import random
from decimal import Decimal

from web3db.storage import Column, Table

TYPES = ("integer", "decimal", "text", "date")
_WORDS = ("alpha", "beta", "gamma", "delta", "", "naïve, \"quoted\"", "line\nbreak", "zeta")


def random_value(rng: random.Random, type_: str):
    if type_ == "integer":
        return rng.randint(-1000, 1000)
    if type_ == "decimal":
        return Decimal(rng.randint(-10**7, 10**7)) / Decimal(10**4)
    if type_ == "text":
        return rng.choice(_WORDS)
    return dt.date(2000, 1, 1) + dt.timedelta(days=rng.randint(0, 9000))


def random_table(rng: random.Random, max_rows: int = 300, max_cols: int = 6) -> Table:
    ncols = rng.randint(1, max_cols)
    schema = tuple(Column(f"c{i}", rng.choice(TYPES)) for i in range(ncols))
    rows = tuple(
        tuple(random_value(rng, c.type) for c in schema) for _ in range(rng.randint(0, max_rows))
    )
    return Table(schema, rows)
