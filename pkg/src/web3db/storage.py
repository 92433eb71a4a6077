"""Content-addressed block storage and canonical table encoding.

Blocks are identified by the SHA-256 digest of their bytes and are never
modified in place; any change to a table yields new row blocks and a new
manifest hash. The store simulates a set of storage nodes so replication
and node failure can be exercised.

Canonical row encoding (all integers big-endian ``u32``)::

    block  := b"W3RB" nrows record*
    record := nfields field*
    field  := length utf8-bytes

Decimals are rendered with exactly four fractional digits, dates as ISO
8601, integers in base 10. The schema block uses the same field encoding
under the magic ``b"W3SC"``; manifests are canonical JSON.
"""

from __future__ import annotations

import csv
import datetime as dt
import io
import json
import struct
from dataclasses import dataclass, field
from decimal import ROUND_HALF_EVEN, Decimal, InvalidOperation
from typing import Any, Iterable, Mapping, Sequence

from .errors import UnavailableError
from .vrf import digest

COLUMN_TYPES = ("integer", "decimal", "text", "date")
DEFAULT_ROWS_PER_BLOCK = 128
DECIMAL_QUANTUM = Decimal("0.0001")

_ROW_MAGIC = b"W3RB"
_SCHEMA_MAGIC = b"W3SC"
_U32 = struct.Struct(">I")


@dataclass(frozen=True, order=True)
class ContentHash:
    digest: bytes

    def __post_init__(self):
        if not isinstance(self.digest, bytes) or len(self.digest) != 32:
            raise ValueError("content hash digest must be 32 bytes")

    @classmethod
    def of(cls, data: bytes) -> ContentHash:
        return cls(digest(data))

    @classmethod
    def from_hex(cls, text: str) -> ContentHash:
        return cls(bytes.fromhex(text))

    @property
    def hex(self) -> str:
        return self.digest.hex()

    def __str__(self) -> str:
        return self.hex

    def __repr__(self) -> str:
        return f"ContentHash({self.hex[:12]}...)"


@dataclass(frozen=True)
class Column:
    name: str
    type: str

    def __post_init__(self):
        if self.type not in COLUMN_TYPES:
            raise ValueError(f"unknown column type {self.type!r}")


def to_decimal(value: Any) -> Decimal:
    if isinstance(value, bool):
        raise TypeError("booleans are not decimals")
    if isinstance(value, float):
        value = repr(value)
    try:
        d = Decimal(value)
    except (InvalidOperation, TypeError) as exc:
        raise TypeError(f"not a decimal: {value!r}") from exc
    d = d.quantize(DECIMAL_QUANTUM, rounding=ROUND_HALF_EVEN)
    return d + Decimal("0.0000") if d.is_zero() else d


def coerce_value(value: Any, type_: str) -> Any:
    """Check ``value`` against a column type and return its normal form."""
    if type_ == "integer":
        if isinstance(value, bool) or not isinstance(value, int):
            raise TypeError(f"expected integer, got {value!r}")
        return value
    if type_ == "decimal":
        return to_decimal(value)
    if type_ == "text":
        if not isinstance(value, str):
            raise TypeError(f"expected text, got {value!r}")
        return value
    if type_ == "date":
        if isinstance(value, dt.datetime):
            raise TypeError("expected a date, got a datetime")
        if isinstance(value, dt.date):
            return value
        if isinstance(value, str):
            try:
                return dt.date.fromisoformat(value)
            except ValueError as exc:
                raise TypeError(f"not an ISO date: {value!r}") from exc
        raise TypeError(f"expected date, got {value!r}")
    raise ValueError(f"unknown column type {type_!r}")


@dataclass(frozen=True)
class Table:
    """Typed relation; values are normalized on construction."""

    schema: tuple[Column, ...]
    rows: tuple[tuple, ...] = ()

    def __post_init__(self):
        schema = tuple(c if isinstance(c, Column) else Column(*c) for c in self.schema)
        names = [c.name for c in schema]
        if len(set(names)) != len(names):
            raise ValueError(f"duplicate column names in {names}")
        rows = []
        for row in self.rows:
            if len(row) != len(schema):
                raise ValueError(f"row arity {len(row)} != schema arity {len(schema)}")
            rows.append(tuple(coerce_value(v, c.type) for v, c in zip(row, schema)))
        object.__setattr__(self, "schema", schema)
        object.__setattr__(self, "rows", tuple(rows))

    @property
    def column_names(self) -> list[str]:
        return [c.name for c in self.schema]

    def __len__(self) -> int:
        return len(self.rows)

    def with_rows(self, rows: Iterable[Sequence]) -> Table:
        return Table(self.schema, tuple(rows))


def render_value(value: Any) -> str:
    if isinstance(value, Decimal):
        return format(to_decimal(value), "f")
    if isinstance(value, dt.date):
        return value.isoformat()
    if isinstance(value, bool):
        raise TypeError("booleans are not a column type")
    if isinstance(value, (int, str)):
        return str(value)
    raise TypeError(f"cannot render {value!r}")


def parse_value(text: str, type_: str) -> Any:
    if type_ == "integer":
        return int(text)
    if type_ == "decimal":
        return to_decimal(text)
    if type_ == "date":
        return dt.date.fromisoformat(text)
    return text


def _encode_fields(fields: Iterable[str]) -> bytes:
    parts = [b""]
    n = 0
    for f in fields:
        raw = f.encode("utf-8")
        parts.append(_U32.pack(len(raw)) + raw)
        n += 1
    parts[0] = _U32.pack(n)
    return b"".join(parts)


class _Reader:
    def __init__(self, data: bytes, magic: bytes):
        if data[: len(magic)] != magic:
            raise ValueError("bad block magic")
        self.data = data
        self.pos = len(magic)

    def u32(self) -> int:
        (v,) = _U32.unpack_from(self.data, self.pos)
        self.pos += 4
        return v

    def fields(self) -> list[str]:
        out = []
        for _ in range(self.u32()):
            n = self.u32()
            out.append(self.data[self.pos : self.pos + n].decode("utf-8"))
            self.pos += n
        return out

    def done(self):
        if self.pos != len(self.data):
            raise ValueError("trailing bytes in block")


def encode_rows(rows: Sequence[tuple]) -> bytes:
    body = b"".join(_encode_fields(render_value(v) for v in row) for row in rows)
    return _ROW_MAGIC + _U32.pack(len(rows)) + body


def decode_rows(data: bytes, schema: Sequence[Column]) -> list[tuple]:
    r = _Reader(data, _ROW_MAGIC)
    rows = []
    for _ in range(r.u32()):
        texts = r.fields()
        if len(texts) != len(schema):
            raise ValueError("row arity does not match schema")
        rows.append(tuple(parse_value(t, c.type) for t, c in zip(texts, schema)))
    r.done()
    return rows


def encode_schema(schema: Sequence[Column]) -> bytes:
    return _SCHEMA_MAGIC + _encode_fields(
        part for c in schema for part in (c.name, c.type)
    )


def decode_schema(data: bytes) -> tuple[Column, ...]:
    r = _Reader(data, _SCHEMA_MAGIC)
    flat = r.fields()
    r.done()
    return tuple(Column(flat[i], flat[i + 1]) for i in range(0, len(flat), 2))


def canonical_json(obj: Any) -> bytes:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False).encode()


@dataclass(frozen=True)
class TableManifest:
    table_name: str
    schema_hash: ContentHash
    row_block_hashes: tuple[ContentHash, ...]
    rows_per_block: int
    row_count: int

    def to_dict(self) -> dict:
        return {
            "table_name": self.table_name,
            "schema_hash": self.schema_hash.hex,
            "blocks": [h.hex for h in self.row_block_hashes],
            "rows_per_block": self.rows_per_block,
            "row_count": self.row_count,
        }

    def to_json(self) -> str:
        return canonical_json(self.to_dict()).decode()

    def encode(self) -> bytes:
        return canonical_json({"kind": "table", **self.to_dict()})

    @classmethod
    def from_dict(cls, d: Mapping) -> TableManifest:
        return cls(
            table_name=d["table_name"],
            schema_hash=ContentHash.from_hex(d["schema_hash"]),
            row_block_hashes=tuple(ContentHash.from_hex(h) for h in d["blocks"]),
            rows_per_block=int(d["rows_per_block"]),
            row_count=int(d["row_count"]),
        )

    @classmethod
    def decode(cls, data: bytes) -> TableManifest:
        d = json.loads(data)
        if d.get("kind") != "table":
            raise ValueError("block is not a table manifest")
        return cls.from_dict(d)


class BlockStore:
    """Immutable block store spread over ``node_count`` simulated storage nodes.

    New blocks are placed on ``replication`` live nodes, walking a ring from
    the node selected by the block hash.
    """

    def __init__(self, node_count: int = 1, replication: int = 1):
        if node_count < 1:
            raise ValueError("need at least one storage node")
        if not 1 <= replication <= node_count:
            raise ValueError("replication must lie in [1, node_count]")
        self.node_count = node_count
        self.replication = replication
        self._nodes: list[dict[ContentHash, bytes]] = [{} for _ in range(node_count)]
        self._alive = [True] * node_count

    def _ring(self, h: ContentHash) -> list[int]:
        start = int.from_bytes(h.digest[:8], "big") % self.node_count
        return [(start + i) % self.node_count for i in range(self.node_count)]

    def holders(self, h: ContentHash) -> list[int]:
        return [i for i, blocks in enumerate(self._nodes) if h in blocks]

    def live_holders(self, h: ContentHash) -> list[int]:
        return [i for i in self.holders(h) if self._alive[i]]

    def put(self, block: bytes) -> ContentHash:
        if not block:
            raise ValueError("cannot store an empty block")
        block = bytes(block)
        h = ContentHash.of(block)
        self._pin(h, block, self.replication)
        return h

    def _pin(self, h: ContentHash, block: bytes, count: int):
        have = set(self.live_holders(h))
        for i in self._ring(h):
            if len(have) >= count:
                break
            if self._alive[i] and i not in have:
                self._nodes[i][h] = block
                have.add(i)
        if not have:
            raise UnavailableError("no live storage node to hold the block")

    def get(self, h: ContentHash) -> bytes:
        for i in self.live_holders(h):
            block = self._nodes[i][h]
            if ContentHash.of(block) == h:
                return block
        raise UnavailableError(f"block {h.hex} has no live replica")

    def replicate(self, h: ContentHash, replica_count: int):
        if replica_count > self.node_count:
            raise ValueError(
                f"cannot place {replica_count} replicas on {self.node_count} nodes"
            )
        block = self.get(h)
        self._pin(h, block, replica_count)
        if len(self.live_holders(h)) < replica_count:
            raise UnavailableError("not enough live storage nodes for replication")

    def fail_node(self, node_id: int):
        self._check_node(node_id)
        self._alive[node_id] = False

    def restore_node(self, node_id: int):
        self._check_node(node_id)
        self._alive[node_id] = True

    def _check_node(self, node_id: int):
        if not 0 <= node_id < self.node_count:
            raise ValueError(f"unknown storage node {node_id}")

    def __contains__(self, h: ContentHash) -> bool:
        return bool(self.live_holders(h))

    def __len__(self) -> int:
        return len({h for blocks in self._nodes for h in blocks})

    @property
    def stored_bytes(self) -> int:
        return sum(len(b) for blocks in self._nodes for b in blocks.values())

    def dump(self) -> dict:
        """Plain-data snapshot: per-node hex hash lists plus the block bytes."""
        blocks = {h.hex: b.hex() for node in self._nodes for h, b in node.items()}
        return {
            "node_count": self.node_count,
            "replication": self.replication,
            "alive": list(self._alive),
            "pins": [sorted(h.hex for h in node) for node in self._nodes],
            "blocks": dict(sorted(blocks.items())),
        }

    @classmethod
    def load(cls, d: Mapping) -> BlockStore:
        store = cls(d["node_count"], d["replication"])
        store._alive = list(d["alive"])
        for i, pins in enumerate(d["pins"]):
            for hx in pins:
                store._nodes[i][ContentHash.from_hex(hx)] = bytes.fromhex(d["blocks"][hx])
        return store


def split_rows(rows: Sequence[tuple], rows_per_block: int) -> list[Sequence[tuple]]:
    return [rows[i : i + rows_per_block] for i in range(0, len(rows), rows_per_block)]


def put_table(
    store: BlockStore,
    table: Table,
    rows_per_block: int = DEFAULT_ROWS_PER_BLOCK,
    table_name: str = "",
) -> ContentHash:
    if rows_per_block < 1:
        raise ValueError("rows_per_block must be at least 1")
    schema_hash = store.put(encode_schema(table.schema))
    blocks = tuple(store.put(encode_rows(chunk)) for chunk in split_rows(table.rows, rows_per_block))
    manifest = TableManifest(table_name, schema_hash, blocks, rows_per_block, len(table))
    return store.put(manifest.encode())


def load_manifest(store: BlockStore, manifest_hash: ContentHash) -> TableManifest:
    return TableManifest.decode(store.get(manifest_hash))


def get_table(store: BlockStore, manifest_hash: ContentHash) -> Table:
    manifest = load_manifest(store, manifest_hash)
    schema = decode_schema(store.get(manifest.schema_hash))
    rows: list[tuple] = []
    for h in manifest.row_block_hashes:
        rows.extend(decode_rows(store.get(h), schema))
    if len(rows) != manifest.row_count:
        raise ValueError("manifest row count does not match its blocks")
    return Table(schema, tuple(rows))


def table_block_hashes(store: BlockStore, manifest_hash: ContentHash) -> list[ContentHash]:
    """Every block a table depends on: manifest, schema and row blocks."""
    m = load_manifest(store, manifest_hash)
    return [manifest_hash, m.schema_hash, *m.row_block_hashes]


def put_database(store: BlockStore, tables: Mapping[str, ContentHash]) -> ContentHash:
    body = {"kind": "database", "tables": {k: v.hex for k, v in sorted(tables.items())}}
    return store.put(canonical_json(body))


def get_database(store: BlockStore, h: ContentHash) -> dict[str, ContentHash]:
    d = json.loads(store.get(h))
    if d.get("kind") != "database":
        raise ValueError("block is not a database manifest")
    return {k: ContentHash.from_hex(v) for k, v in d["tables"].items()}


def load_csv(source: str | io.TextIOBase) -> Table:
    """Read a CSV whose header cells are ``name:type``."""
    if isinstance(source, str):
        source = io.StringIO(source)
    reader = csv.reader(source)
    header = next(reader)
    schema = []
    for cell in header:
        name, sep, type_ = cell.strip().partition(":")
        if not sep:
            raise ValueError(f"header cell {cell!r} lacks a ':type' suffix")
        schema.append(Column(name.strip(), type_.strip()))
    rows = [
        tuple(parse_value(text, c.type) for text, c in zip(record, schema))
        for record in reader
        if record
    ]
    return Table(tuple(schema), tuple(rows))


def dump_csv(table: Table) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow([f"{c.name}:{c.type}" for c in table.schema])
    for row in table.rows:
        writer.writerow([render_value(v) for v in row])
    return buf.getvalue()
