"""End-to-end query lifecycle and the deterministic multi-node simulator.

One call to :meth:`Simulation.submit` walks a query through the whole
system flow:

1. the ledger checks the user's signed request against the ACL,
2. an entry node gossips the approved query to every engine node,
3. each engine node runs sortition under its ledger weight,
4. candidates gossip their proofs and the ledger quorum elects a master
   (empty elections are re-run on derived retry seeds),
5. ledger peers fetch the referenced tables from block storage,
6. the master plans, dispatches fragments to workers and merges partials,
7. mutated tables are written back as new manifests,
8. the master signs and encrypts the result,
9. the ledger verifies the signature, then updates weights and ACL hashes,
10. all caches are purged, the master's last,
11. the user decrypts the result with the session key.
"""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Mapping, Sequence

from . import sealing, vrf
from .engine import (
    CacheRegistry,
    PartialResult,
    PurgeReport,
    QueryResult,
    apply_insert,
    create_table,
    merge,
    parse,
    plan,
    purge_caches,
    worker_execute,
)
from .engine.ast import CreateTable, Insert, Select, Statement
from .engine.planner import ExecutionPlan, TableStats, WorkerFragment, bind
from .errors import (
    ConfigurationError,
    ConflictError,
    IncompleteError,
    NotFoundError,
    RefusalError,
    Web3DBError,
)
from .gossip import GossipNetwork, NetworkTopology, build_network
from .ledger import Ledger, MasterElection
from .sortition import (
    RoundSeed,
    SortitionProof,
    genesis_seed,
    next_seed,
    retry_seed,
    sortition,
)
from .storage import (
    BlockStore,
    ContentHash,
    Table,
    get_table,
    load_csv,
    load_manifest,
    decode_rows,
    decode_schema,
    put_database,
    put_table,
    table_block_hashes,
)
from . import datasets

STATUS_OK = "ok"
STATUS_DENIED = "access_denied"
STATUS_NO_MASTER = "no_master_retry_exhausted"
STATUS_INCOMPLETE = "incomplete"

MAX_REDISPATCH = 2

_QUERY_TAG = b"query|"
_PROOF_TAG = b"proof|"


class ElectionFailed(Web3DBError):
    """Every election attempt of a round ended without a master."""

    def __init__(self, round: int, attempts: int):
        super().__init__(f"round {round}: no master after {attempts} attempts")
        self.round = round
        self.attempts = attempts


@dataclass
class SimulationConfig:
    node_count: int = 10
    genesis_weight_count: int = 3
    quorum_size: int = 4
    gossip_fanout: int = 3
    rng_seed: str = "web3db"
    rows_per_block: int = 128
    replication_factor: int = 3
    retry_limit: int = 16
    worker_count: int | None = None
    users: list[str] = field(default_factory=lambda: ["alice", "bob"])
    datasets: list[dict] = field(default_factory=list)
    grants: list[dict] = field(default_factory=list)
    workload: list[tuple[str, str]] = field(default_factory=list)
    scaling_worker_counts: list[int] = field(default_factory=lambda: [1, 2, 5, 10])
    lazy_masters: list[int] = field(default_factory=list)
    drop_prob: float = 0.0

    def validate(self):
        if self.node_count < 1:
            raise ConfigurationError("node_count must be at least 1")
        if not 1 <= self.genesis_weight_count <= self.node_count:
            raise ConfigurationError("genesis_weight_count must lie in [1, node_count]")
        if self.quorum_size < 1:
            raise ConfigurationError("quorum_size must be at least 1")
        if self.retry_limit < 1:
            raise ConfigurationError("retry_limit must be at least 1")
        if self.rows_per_block < 1:
            raise ConfigurationError("rows_per_block must be at least 1")
        if not 1 <= self.replication_factor <= self.node_count:
            raise ConfigurationError("replication_factor must lie in [1, node_count]")
        if self.node_count > 1 and not 1 <= self.gossip_fanout < self.node_count:
            raise ConfigurationError("gossip_fanout must lie in [1, node_count - 1]")
        if self.worker_count is not None and self.worker_count < 1:
            raise ConfigurationError("worker_count must be at least 1")
        if len(set(self.users)) != len(self.users):
            raise ConfigurationError("duplicate user names")
        for user, _ in self.workload:
            if user not in self.users:
                raise ConfigurationError(f"workload references unknown user {user!r}")
        for d in self.datasets:
            if d.get("owner") not in self.users:
                raise ConfigurationError(f"dataset owner {d.get('owner')!r} is not a user")

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> SimulationConfig:
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise ConfigurationError(f"unknown config keys: {sorted(unknown)}")
        kwargs = dict(d)
        if "workload" in kwargs:
            kwargs["workload"] = [_workload_item(w) for w in kwargs["workload"]]
        cfg = cls(**kwargs)
        cfg.validate()
        return cfg

    def to_dict(self) -> dict:
        d = asdict(self)
        d["workload"] = [{"user": u, "sql": s} for u, s in self.workload]
        return d

    @property
    def seed_bytes(self) -> bytes:
        return vrf.digest(self.rng_seed.encode())


def _workload_item(w) -> tuple[str, str]:
    if isinstance(w, Mapping):
        return (w["user"], w["sql"])
    user, sql = w
    return (user, sql)


@dataclass
class EngineNode:
    index: int
    keys: vrf.KeyPair
    registry: CacheRegistry = field(default_factory=CacheRegistry)
    skips_self_purge: bool = False
    refuses_work: bool = False

    @property
    def pk(self) -> bytes:
        return self.keys.pk

    def execute(
        self,
        ledger: Ledger,
        election: MasterElection,
        fragment: WorkerFragment,
        rows: Sequence[tuple],
        broadcast: Sequence[tuple],
    ) -> PartialResult:
        ok = ledger.verify_consensus(election) and not self.refuses_work
        return worker_execute(fragment, rows, broadcast, registry=self.registry, consensus_ok=ok)


@dataclass(frozen=True)
class TableRef:
    owner_pk: bytes
    manifest: ContentHash


@dataclass
class QueryLifecycle:
    round: int
    user_pk: bytes
    sql: str
    status: str = STATUS_OK
    seed: RoundSeed | None = None
    proofs: list[SortitionProof] = field(default_factory=list)
    election: MasterElection | None = None
    retries: int = 0
    worker_pks: list[bytes] = field(default_factory=list)
    input_manifest: ContentHash | None = None
    output_manifest: ContentHash | None = None
    signed_result: sealing.SignedResult | None = None
    result: QueryResult | None = None
    partition_sizes: list[int] = field(default_factory=list)
    makespan: int | None = None
    scaling: dict[int, int] = field(default_factory=dict)
    refusals: int = 0
    forced_purge_bytes: int = 0
    purge: PurgeReport | None = None
    cache_bytes_after: int = 0
    error: str = ""

    @property
    def master_pk(self) -> bytes | None:
        return self.election.master_pk if self.election else None

    def summary(self, node_index: Mapping[bytes, int]) -> dict:
        return {
            "round": self.round,
            "status": self.status,
            "sql": self.sql,
            "user": self.user_pk.hex(),
            "retries": self.retries,
            "proofs": len(self.proofs),
            "candidates": len(self.election.valid_candidates) if self.election else 0,
            "master": node_index.get(self.master_pk) if self.master_pk else None,
            "workers": sorted(node_index[pk] for pk in self.worker_pks),
            "input_manifest": self.input_manifest.hex if self.input_manifest else None,
            "output_manifest": self.output_manifest.hex if self.output_manifest else None,
            "result_digest": self.signed_result.result_digest.hex() if self.signed_result else None,
            "result_rows": len(self.result.rows) if self.result else None,
            "partition_sizes": self.partition_sizes,
            "makespan": self.makespan,
            "refusals": self.refusals,
            "forced_purge_bytes": self.forced_purge_bytes,
            "cache_bytes_after": self.cache_bytes_after,
            "error": self.error,
        }


class Simulation:
    """All simulated parties of one deployment, driven one query at a time."""

    def __init__(self, config: SimulationConfig):
        config.validate()
        self.config = config
        seed = config.seed_bytes
        self.nodes = [
            EngineNode(i, vrf.keygen(vrf.digest(seed + b"node" + i.to_bytes(4, "big"))))
            for i in range(config.node_count)
        ]
        for i in config.lazy_masters:
            self.nodes[i].skips_self_purge = True
        self.node_index = {n.pk: n.index for n in self.nodes}
        self.users = {name: user_keys(config, name) for name in config.users}
        self.ledger = Ledger(config.quorum_size, peer_seed=seed + b"peers")
        for n in self.nodes:
            self.ledger.register_node(n.pk, 1 if n.index < config.genesis_weight_count else 0)
        self.store = BlockStore(config.node_count, config.replication_factor)
        self.topology = _connected_topology([n.pk for n in self.nodes], config) if len(self.nodes) > 1 else None
        self.network = (
            GossipNetwork(self.topology, config.drop_prob, seed) if self.topology else None
        )
        self.seed = genesis_seed(vrf.digest(seed + b"genesis"))
        self.catalog: dict[str, TableRef] = {}
        self.database_manifest: ContentHash | None = None
        self.lifecycles: list[QueryLifecycle] = []
        self.sortition_attempts = Counter()
        self.sortition_selected = Counter()
        for d in config.datasets:
            self.load_table(d["owner"], d["table"], _dataset_table(d))
        for g in config.grants:
            self.grant(g["owner"], g["grantee"], g["table"], g.get("blocks"))

    # -- setup helpers ----------------------------------------------------

    def load_table(self, owner: str | vrf.KeyPair, name: str, table: Table) -> ContentHash:
        keys = self.users[owner] if isinstance(owner, str) else owner
        if name in self.catalog:
            raise ConflictError(f"table {name} already exists")
        h = self._write_table(name, table)
        for block in table_block_hashes(self.store, h):
            sig = self.ledger.sign_request(keys, "register", block)
            self.ledger.acl_register_data(keys.pk, block, sig)
        self.catalog[name] = TableRef(keys.pk, h)
        self._update_database_manifest()
        return h

    def grant(self, owner: str, grantee: str | bytes, table: str, blocks: Sequence[int] | None = None):
        """Grant a whole table, or only the listed row blocks of it."""
        keys = self.users[owner]
        grantee_pk = self.users[grantee].pk if isinstance(grantee, str) else grantee
        for h in self._grant_targets(table, blocks):
            sig = self.ledger.sign_request(keys, "grant", grantee_pk, h)
            self.ledger.acl_grant(keys.pk, grantee_pk, h, sig)

    def revoke(self, owner: str, grantee: str | bytes, table: str, blocks: Sequence[int] | None = None):
        keys = self.users[owner]
        grantee_pk = self.users[grantee].pk if isinstance(grantee, str) else grantee
        for h in self._grant_targets(table, blocks):
            sig = self.ledger.sign_request(keys, "revoke", grantee_pk, h)
            self.ledger.acl_revoke(keys.pk, grantee_pk, h, sig)

    def _grant_targets(self, table: str, blocks: Sequence[int] | None) -> list[ContentHash]:
        ref = self.catalog[table]
        if blocks is None:
            return [ref.manifest]
        manifest = load_manifest(self.store, ref.manifest)
        return [manifest.row_block_hashes[i] for i in blocks]

    def _write_table(self, name: str, table: Table) -> ContentHash:
        h = put_table(self.store, table, self.config.rows_per_block, name)
        for block in table_block_hashes(self.store, h):
            self.store.replicate(block, self.config.replication_factor)
        return h

    def _update_database_manifest(self):
        self.database_manifest = put_database(
            self.store, {k: v.manifest for k, v in self.catalog.items()}
        )

    def table(self, name: str) -> Table:
        return get_table(self.store, self.catalog[name].manifest)

    # -- access control ---------------------------------------------------

    def request_message(self, user_pk: bytes, sql: str) -> bytes:
        return b"query" + user_pk + self.seed.round.to_bytes(8, "big") + sql.encode()

    def _readable_view(self, user_pk: bytes, name: str) -> tuple[Table, list[ContentHash]] | None:
        """Rows of ``name`` the user may read, fetched by the ledger peers."""
        ref = self.catalog[name]
        manifest = load_manifest(self.store, ref.manifest)
        if self.ledger.acl_check(user_pk, ref.manifest):
            picked = list(manifest.row_block_hashes)
        else:
            picked = [h for h in manifest.row_block_hashes if self.ledger.acl_check(user_pk, h)]
            if not picked:
                return None
        schema = decode_schema(self.store.get(manifest.schema_hash))
        rows: list[tuple] = []
        for h in picked:
            rows.extend(decode_rows(self.store.get(h), schema))
        return Table(schema, tuple(rows)), [ref.manifest, manifest.schema_hash, *picked]

    # -- election ---------------------------------------------------------

    def run_election_round(self, seed: RoundSeed, retry: int) -> tuple[MasterElection, RoundSeed, list[SortitionProof]]:
        """One sortition + election attempt on the ``retry``-th derived seed."""
        if retry >= self.config.retry_limit:
            raise ElectionFailed(seed.round, retry)
        used = retry_seed(seed, retry)
        W = self.ledger.total_weight()
        winners: list[SortitionProof] = []
        if W >= 1:
            for node in self._query_receivers():
                sp = sortition(node.keys.sk, used, self.ledger.weight(node.pk), W)
                self.sortition_attempts[node.index] += 1
                if sp.j >= 1:
                    self.sortition_selected[node.index] += 1
                    winners.append(sp)
        proofs = self._gossip_proofs(winners, used)
        election = self.ledger.elect_master(seed.round, used, proofs)
        return election, used, proofs

    def elect(self, seed: RoundSeed) -> tuple[MasterElection, RoundSeed, list[SortitionProof], int]:
        for retry in range(self.config.retry_limit):
            election, used, proofs = self.run_election_round(seed, retry)
            if election.elected:
                return election, used, proofs, retry
        raise ElectionFailed(seed.round, self.config.retry_limit)

    def _query_receivers(self) -> list[EngineNode]:
        if self.network is None:
            return list(self.nodes)
        entry = self.nodes[self.seed.round % len(self.nodes)].pk
        reached = {
            pk
            for pk in self.node_index
            if any(m.payload.startswith(_QUERY_TAG) for m in self.network.inbox_messages(pk))
        }
        reached.add(entry)
        return [n for n in self.nodes if n.pk in reached]

    def _gossip_proofs(self, winners: list[SortitionProof], seed: RoundSeed) -> list[SortitionProof]:
        if self.network is None:
            return winners
        by_pk = {n.pk: n for n in self.nodes}
        for sp in winners:
            self.network.broadcast(by_pk[sp.node_pk].keys.sk, _PROOF_TAG + seed.value + sp.to_bytes(), sp.round)
        # The ledger collects what reached the entry node during the window.
        entry = self.nodes[self.seed.round % len(self.nodes)].pk
        collected = []
        prefix = _PROOF_TAG + seed.value
        for m in self.network.inbox_messages(entry):
            if m.payload.startswith(prefix):
                try:
                    collected.append(SortitionProof.from_bytes(m.payload[len(prefix):]))
                except ValueError:
                    continue
        return collected

    # -- lifecycle --------------------------------------------------------

    def submit(self, user_keys: vrf.KeyPair, sql: str, signature: bytes | None = None) -> QueryLifecycle:
        """Run one query through the full system flow and record its lifecycle."""
        ast = parse(sql)
        self._check_statement(ast)
        round_ = self.seed.round
        self.ledger.current_round = round_
        lc = QueryLifecycle(round_, user_keys.pk, sql)
        self.lifecycles.append(lc)

        # (1) authorization
        if signature is None:
            signature = vrf.sign(user_keys.sk, self.request_message(user_keys.pk, sql))
        views = self._authorize(lc, user_keys.pk, sql, ast, signature)
        if views is None:
            lc.status = STATUS_DENIED
            self.ledger.log_event("access_denied", user_keys.pk, None, sql)
            return lc

        # (2) dissemination
        if self.network is not None:
            self.network.clear()
            entry = self.nodes[round_ % len(self.nodes)]
            self.network.broadcast(entry.keys.sk, _QUERY_TAG + sql.encode(), round_)

        # (3)-(4) sortition and election
        try:
            election, used, proofs, retries = self.elect(self.seed)
        except ElectionFailed as exc:
            lc.status = STATUS_NO_MASTER
            lc.retries = exc.attempts
            lc.error = str(exc)
            self.seed = RoundSeed(round_ + 1, vrf.digest(b"no-master" + self.seed.value), b"")
            return lc
        lc.election, lc.seed, lc.proofs, lc.retries = election, used, proofs, retries
        master = self.nodes[self.node_index[election.master_pk]]

        # (5)-(7) fetch, execute, write back
        try:
            payload, hash_updates, registrations, workers = self._execute(lc, ast, views, master, election)
        except Web3DBError as exc:
            if not isinstance(exc, IncompleteError):
                self._purge(lc, master, [n for n in self.nodes if len(n.registry)])
                raise
            lc.status = STATUS_INCOMPLETE
            lc.error = str(exc)
            self._purge(lc, master, [n for n in self.nodes if len(n.registry)])
            self.seed = next_seed(used, master.keys.sk)
            return lc
        lc.worker_pks = [w.pk for w in workers]

        # (8) seal
        signed = sealing.encrypt_result(master.keys.sk, payload, round_)
        lc.signed_result = signed

        # (9) ledger verification and bookkeeping
        if not self.ledger.apply_query_result(
            master.pk, signed, lc.worker_pks, hash_updates, registrations
        ):
            lc.status = STATUS_INCOMPLETE
            lc.error = "master signature rejected"
        elif isinstance(ast, (Insert, CreateTable)):
            self.catalog[ast.tables[0]] = TableRef(self._owner_of(ast), lc.output_manifest)
            self._update_database_manifest()

        # (10) purge
        self._purge(lc, master, workers)

        # (11) hand the session key to the user
        if lc.status == STATUS_OK:
            key = sealing.session_key(master.keys.sk, round_)
            lc.result = QueryResult.from_bytes(sealing.decrypt_result(key, signed))
        self.seed = next_seed(used, master.keys.sk)
        return lc

    def _owner_of(self, ast: Statement) -> bytes:
        name = ast.tables[0]
        ref = self.catalog.get(name)
        return ref.owner_pk if ref else self.lifecycles[-1].user_pk

    def _check_statement(self, ast: Statement):
        """Reject statements that cannot run against the catalog before any round state changes."""
        if isinstance(ast, CreateTable):
            if ast.name in self.catalog:
                raise ConflictError(f"table {ast.name} already exists")
            return
        schemas = {}
        for name in ast.tables:
            if name not in self.catalog:
                raise NotFoundError(f"unknown table {name}")
            m = load_manifest(self.store, self.catalog[name].manifest)
            schemas[name] = decode_schema(self.store.get(m.schema_hash))
        if isinstance(ast, Select):
            bind(ast, {n: TableStats(s, 0) for n, s in schemas.items()})
        else:
            apply_insert(ast, Table(schemas[ast.table], ()))

    def _authorize(self, lc, user_pk, sql, ast, signature):
        if not vrf.verify_signature(user_pk, self.request_message(user_pk, sql), signature):
            self.ledger.log_event("auth_failed", user_pk, None, "bad request signature")
            return None
        views: dict[str, tuple[Table, list[ContentHash]]] = {}
        if isinstance(ast, CreateTable):
            return views
        for name in ast.tables:
            if isinstance(ast, Insert):
                if not self.ledger.acl_check(user_pk, self.catalog[name].manifest):
                    return None
            view = self._readable_view(user_pk, name)
            if view is None:
                return None
            views[name] = view
        lc.input_manifest = self.catalog[ast.tables[0]].manifest
        self.ledger.log_event("authorized", user_pk, lc.input_manifest, sql)
        return views

    def _eligible_workers(self, master: EngineNode, seed: RoundSeed) -> list[EngineNode]:
        others = [n for n in self.nodes if n is not master]
        return sorted(others, key=lambda n: vrf.digest(seed.value + n.pk))

    def _execute(self, lc, ast, views, master, election):
        for _, blocks in views.values():
            for h in blocks:
                master.registry.register(h, len(self.store.get(h)))
        if isinstance(ast, Select):
            return self._execute_select(lc, ast, views, master, election)
        # Writes go through one worker, which caches the blocks it stores.
        eligible = self._eligible_workers(master, lc.seed)
        writer = eligible[0] if eligible else master
        if isinstance(ast, CreateTable):
            h = self._write_table(ast.name, create_table(ast))
            lc.output_manifest = h
            result = QueryResult(("table", "manifest", "rows"), ("text", "text", "integer"), ((ast.name, h.hex, 0),))
            regs = [(lc.user_pk, b) for b in table_block_hashes(self.store, h)]
            self._cache_blocks(writer, h)
            return result.to_bytes(), [], regs, self._writers(writer, master)
        ref = self.catalog[ast.table]
        new = apply_insert(ast, get_table(self.store, ref.manifest))
        h = self._write_table(ast.table, new)
        lc.output_manifest = h
        old_m, new_m = load_manifest(self.store, ref.manifest), load_manifest(self.store, h)
        updates = [(ref.owner_pk, ref.manifest, h)]
        regs = []
        for i, nb in enumerate(new_m.row_block_hashes):
            if i >= len(old_m.row_block_hashes):
                regs.append((ref.owner_pk, nb))
            elif old_m.row_block_hashes[i] != nb:
                updates.append((ref.owner_pk, old_m.row_block_hashes[i], nb))
        self._cache_blocks(writer, h)
        result = QueryResult(
            ("table", "manifest", "rows"), ("text", "text", "integer"), ((ast.table, h.hex, len(new)),)
        )
        return result.to_bytes(), updates, regs, self._writers(writer, master)

    def _cache_blocks(self, node: EngineNode, manifest: ContentHash):
        for b in table_block_hashes(self.store, manifest):
            node.registry.register(b, len(self.store.get(b)))

    @staticmethod
    def _writers(writer: EngineNode, master: EngineNode) -> list[EngineNode]:
        return [] if writer is master else [writer]

    def _execute_select(self, lc, ast, views, master, election):
        tables = {name: t for name, (t, _) in views.items()}
        eligible = self._eligible_workers(master, lc.seed)
        if not eligible:
            eligible = [master]
        k = min(self.config.worker_count or len(eligible), len(eligible))
        p: ExecutionPlan = plan(ast, tables, k)
        lc.partition_sizes = p.partition_sizes
        lc.makespan = p.makespan()
        lc.scaling = {c: plan(ast, tables, c).makespan() for c in self.config.scaling_worker_counts}
        probe = tables[p.probe_table].rows
        broadcast = tables[p.broadcast_table].rows if p.broadcast_table else ()
        primaries, spares = eligible[:k], eligible[k:]
        partials: list[PartialResult | None] = []
        used: list[EngineNode] = []
        for frag in p.fragments:
            worker = primaries[frag.index]
            partial = None
            for attempt in range(MAX_REDISPATCH + 1):
                try:
                    partial = worker.execute(self.ledger, election, frag, probe[frag.start : frag.stop], broadcast)
                    break
                except RefusalError:
                    lc.refusals += 1
                    self.ledger.log_event("worker_refusal", worker.pk, None, f"fragment={frag.index}")
                    if attempt == MAX_REDISPATCH or not spares:
                        break
                    worker = spares.pop(0)
            partials.append(partial)
            if partial is not None:
                lc.forced_purge_bytes += partial.forced_purge_bytes
                if worker is not master and worker not in used:
                    used.append(worker)
        result = merge(partials, p)
        return result.to_bytes(), [], [], used

    def _purge(self, lc, master: EngineNode, workers: Sequence[EngineNode]):
        registries = {n.index: n.registry for n in self.nodes}
        ids = [w.index for w in workers if w is not master] + [master.index]
        lc.purge = purge_caches(registries, ids, master.index, skip_master=master.skips_self_purge)
        if lc.purge.residual:
            self.ledger.log_event(
                "residual_cache", master.pk, None, f"bytes={lc.purge.residual[master.index]}"
            )
        lc.cache_bytes_after = sum(n.registry.total_bytes for n in self.nodes)

    # -- reporting --------------------------------------------------------

    def run_workload(self, workload: Sequence[tuple[str, str]] | None = None) -> list[QueryLifecycle]:
        out = []
        for user, sql in self.config.workload if workload is None else workload:
            out.append(self.submit(self.users[user], sql))
        return out

    def report(self) -> SimulationReport:
        masters = Counter()
        workers = Counter()
        for lc in self.lifecycles:
            if lc.status == STATUS_OK:
                masters[self.node_index[lc.master_pk]] += 1
                for pk in lc.worker_pks:
                    workers[self.node_index[pk]] += 1
        service = {
            str(n.index): {"master": masters[n.index], "worker": workers[n.index], "weight": self.ledger.weight(n.pk)}
            for n in self.nodes
        }
        selection = {
            str(n.index): {
                "attempts": self.sortition_attempts[n.index],
                "selected": self.sortition_selected[n.index],
                "frequency": round(self.sortition_selected[n.index] / self.sortition_attempts[n.index], 6)
                if self.sortition_attempts[n.index]
                else None,
            }
            for n in self.nodes
        }
        elected = [lc for lc in self.lifecycles if lc.election is not None]
        retry_hist = Counter(str(lc.retries) for lc in elected)
        spreads = [max(lc.partition_sizes) - min(lc.partition_sizes) for lc in self.lifecycles if lc.partition_sizes]
        scaling: dict[str, int] = {}
        for lc in self.lifecycles:
            if lc.status == STATUS_OK:
                for c, m in lc.scaling.items():
                    scaling[str(c)] = scaling.get(str(c), 0) + m
        statuses = Counter(lc.status for lc in self.lifecycles)
        return SimulationReport(
            {
                "config": self.config.to_dict(),
                "rounds": len(self.lifecycles),
                "status_counts": dict(sorted(statuses.items())),
                "lifecycles": [lc.summary(self.node_index) for lc in self.lifecycles],
                "node_service": service,
                "selection_frequency": selection,
                "retry_histogram": dict(sorted(retry_hist.items(), key=lambda kv: int(kv[0]))),
                "partition_balance": {
                    "queries": len(spreads),
                    "max_spread": max(spreads, default=0),
                },
                "makespan_by_worker_count": scaling,
                "rotation_violations": rotation_violations(self.lifecycles),
                "final_seed": self.seed.value.hex(),
                "database_manifest": self.database_manifest.hex if self.database_manifest else None,
                "audit_records": len(self.ledger.audit),
            }
        )

    # -- persistence ------------------------------------------------------

    def save(self, directory: str | Path):
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        (d / "config.json").write_text(json.dumps(self.config.to_dict(), indent=2, sort_keys=True))
        (d / "ledger.json").write_text(json.dumps(self.ledger.to_dict(), sort_keys=True))
        (d / "blocks.json").write_text(json.dumps(self.store.dump(), sort_keys=True))
        state = {
            "seed": {"round": self.seed.round, "value": self.seed.value.hex(), "proof": self.seed.proof.hex()},
            "catalog": {k: {"owner": v.owner_pk.hex(), "manifest": v.manifest.hex} for k, v in sorted(self.catalog.items())},
            "database_manifest": self.database_manifest.hex if self.database_manifest else None,
        }
        (d / "state.json").write_text(json.dumps(state, indent=2, sort_keys=True))
        users = d / "users"
        users.mkdir(exist_ok=True)
        for name, keys in self.users.items():
            write_keyfile(users / f"{name}.json", keys)

    @classmethod
    def load(cls, directory: str | Path) -> Simulation:
        d = Path(directory)
        config = SimulationConfig.from_dict(json.loads((d / "config.json").read_text()))
        config.datasets, config.grants = [], []
        sim = cls(config)
        sim.ledger = Ledger.from_dict(json.loads((d / "ledger.json").read_text()))
        sim.store = BlockStore.load(json.loads((d / "blocks.json").read_text()))
        state = json.loads((d / "state.json").read_text())
        s = state["seed"]
        sim.seed = RoundSeed(s["round"], bytes.fromhex(s["value"]), bytes.fromhex(s["proof"]))
        sim.catalog = {
            k: TableRef(bytes.fromhex(v["owner"]), ContentHash.from_hex(v["manifest"]))
            for k, v in state["catalog"].items()
        }
        dm = state.get("database_manifest")
        sim.database_manifest = ContentHash.from_hex(dm) if dm else None
        return sim


@dataclass(frozen=True)
class SimulationReport:
    data: dict

    def to_json(self) -> str:
        return json.dumps(self.data, indent=2, sort_keys=True)


def user_keys(config: SimulationConfig, name: str) -> vrf.KeyPair:
    return vrf.keygen(vrf.digest(config.seed_bytes + b"user" + name.encode()))


def _connected_topology(pks: list[bytes], config: SimulationConfig) -> NetworkTopology:
    """First connected topology in the seed sequence derived from the config."""
    fanout = min(config.gossip_fanout, len(pks) - 1)
    for attempt in range(1000):
        topo = build_network(pks, fanout, config.seed_bytes + b"gossip" + attempt.to_bytes(4, "big"))
        if topo.is_connected():
            return topo
    raise ConfigurationError("could not build a connected gossip topology")


def _dataset_table(d: Mapping[str, Any]) -> Table:
    if "csv" in d:
        return load_csv(Path(d["csv"]).read_text())
    if "csv_text" in d:
        return load_csv(d["csv_text"])
    return datasets.generate(d["generator"], int(d.get("rows", 100)), int(d.get("seed", 0)))


def rotation_violations(lifecycles: Sequence[QueryLifecycle]) -> int:
    """Count master terms not preceded by a worker term since the node's last master term."""
    last_role: dict[bytes, str] = {}
    violations = 0
    for lc in lifecycles:
        if lc.status != STATUS_OK:
            continue
        if last_role.get(lc.master_pk) == "master":
            violations += 1
        last_role[lc.master_pk] = "master"
        for pk in lc.worker_pks:
            last_role[pk] = "worker"
    return violations


def submit_query(user_keys: vrf.KeyPair, sql: str, sim: Simulation) -> QueryLifecycle:
    return sim.submit(user_keys, sql)


def simulate(config: SimulationConfig) -> SimulationReport:
    sim = Simulation(config)
    sim.run_workload()
    return sim.report()


# -- sortition statistics -----------------------------------------------------


def sortition_stats(
    nodes: int,
    rounds: int,
    weight: int = 1,
    total: int | None = None,
    rng_seed: bytes = b"web3db-sortition-stats",
) -> dict:
    """Empirical selection behaviour of ``nodes`` equal-weight nodes over ``rounds`` seeds."""
    if nodes < 1 or rounds < 1:
        raise ValueError("nodes and rounds must be positive")
    W = nodes * weight if total is None else total
    if not 0 <= weight <= W or W < 1:
        raise ValueError("need 0 <= weight <= total and total >= 1")
    keys = [vrf.keygen(vrf.digest(rng_seed + b"node" + i.to_bytes(4, "big"))) for i in range(nodes)]
    selected = [0] * nodes
    j_hist: Counter = Counter()
    rounds_with_candidate = 0
    seed_value = vrf.digest(rng_seed + b"genesis")
    for r in range(rounds):
        seed = RoundSeed(r, seed_value)
        any_candidate = False
        for i, k in enumerate(keys):
            j = sortition(k.sk, seed, weight, W).j
            j_hist[j] += 1
            if j >= 1:
                selected[i] += 1
                any_candidate = True
        rounds_with_candidate += any_candidate
        seed_value = vrf.digest(seed_value)
    p = weight / W
    return {
        "nodes": nodes,
        "rounds": rounds,
        "weight": weight,
        "total_weight": W,
        "p": p,
        "per_node_frequency": [s / rounds for s in selected],
        "expected_frequency": round(1 - (1 - p) ** weight, 10),
        "candidate_round_fraction": rounds_with_candidate / rounds,
        "expected_candidate_round_fraction": round(1 - (1 - p) ** (weight * nodes), 10),
        "j_histogram": {str(j): c for j, c in sorted(j_hist.items())},
    }


def read_keyfile(path: str | Path) -> vrf.KeyPair:
    d = json.loads(Path(path).read_text())
    keys = vrf.keygen(bytes.fromhex(d["sk"]))
    if "pk" in d and bytes.fromhex(d["pk"]) != keys.pk:
        raise ValueError("keyfile public key does not match its secret key")
    return keys


def write_keyfile(path: str | Path, keys: vrf.KeyPair):
    Path(path).write_text(json.dumps({"pk": keys.pk.hex(), "sk": keys.sk.hex()}, indent=2) + "\n")
