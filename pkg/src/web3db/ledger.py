"""Access-control ledger: ACL state machine, node weights and master election.

The ledger stands in for the permissionless chain of the access-control
layer. It keeps

* the public log of engine nodes and their binary weights,
* one ACL entry per data owner (owned hashes plus per-grantee grants),
* an append-only audit log of every accepted mutation,
* a simulated quorum of validator peers that re-verify sortition proofs
  and sign a certificate naming the elected master.

All ACL mutations are authenticated by a signature over a canonical request
payload that includes a per-owner nonce, so a captured request cannot be
replayed once the owner has issued another one.
"""

from __future__ import annotations

import csv
import io
import math
import threading
from collections import Counter
from dataclasses import dataclass, field, replace
from functools import wraps
from typing import Iterable, Sequence

from . import sealing, vrf
from .errors import AuthError, ConflictError, NotFoundError, OwnershipError
from .sortition import Priority, RoundSeed, SortitionProof, priority, verify_sortition
from .storage import ContentHash


@dataclass
class NodeRecord:
    pk: bytes
    weight: int = 0
    served_as_worker: bool = False


@dataclass
class AclEntry:
    owner_pk: bytes
    owned: set[ContentHash] = field(default_factory=set)
    granted_to: dict[bytes, set[ContentHash]] = field(default_factory=dict)


@dataclass(frozen=True)
class AuditRecord:
    round: int
    op: str
    pk: str
    hash: str
    detail: str

    def as_row(self) -> list[str]:
        return [str(self.round), self.op, self.pk, self.hash, self.detail]


@dataclass(frozen=True)
class Candidate:
    pk: bytes
    j: int
    priority: Priority


@dataclass(frozen=True)
class MasterElection:
    round: int
    master_pk: bytes | None
    winning_priority: Priority | None
    valid_candidates: tuple[Candidate, ...]
    quorum_votes: int
    seed_value: bytes = b""
    certificate: tuple[tuple[bytes, bytes], ...] = ()

    @property
    def elected(self) -> bool:
        return self.master_pk is not None


def quorum_threshold(quorum_size: int) -> int:
    return math.ceil(2 * quorum_size / 3)


def election_message(round: int, master_pk: bytes, seed_value: bytes) -> bytes:
    return b"elect" + round.to_bytes(8, "big") + master_pk + seed_value


def acl_payload(op: str, owner_pk: bytes, nonce: int, *parts: bytes | ContentHash) -> bytes:
    chunks = [op.encode(), owner_pk, nonce.to_bytes(8, "big")]
    chunks += [p.digest if isinstance(p, ContentHash) else bytes(p) for p in parts]
    return b"acl|" + b"|".join(c.hex().encode() for c in chunks)


def _serialized(method):
    @wraps(method)
    def wrapper(self, *args, **kwargs):
        with self._lock:
            return method(self, *args, **kwargs)

    return wrapper


class Ledger:
    def __init__(self, quorum_size: int = 4, peer_seed: bytes = b"web3db-peers"):
        if quorum_size < 1:
            raise ValueError("quorum_size must be at least 1")
        self.quorum_size = quorum_size
        self.peer_seed = bytes(peer_seed)
        self.peers = [
            vrf.keygen(vrf.digest(self.peer_seed + i.to_bytes(4, "big")))
            for i in range(quorum_size)
        ]
        self.current_round = 0
        self.nodes: dict[bytes, NodeRecord] = {}
        self.acl: dict[bytes, AclEntry] = {}
        self.audit: list[AuditRecord] = []
        self.elections: dict[int, MasterElection] = {}
        self._nonces: dict[bytes, int] = {}
        self._lock = threading.RLock()

    # -- public node log -------------------------------------------------

    @_serialized
    def register_node(self, pk: bytes, genesis_weight: int = 0) -> NodeRecord:
        if pk in self.nodes:
            raise ConflictError(f"node {pk.hex()[:16]} already registered")
        if genesis_weight not in (0, 1):
            raise ValueError("genesis weight must be 0 or 1")
        # Genesis weight-1 nodes count as having served; this bootstraps W >= 1.
        record = NodeRecord(pk, genesis_weight, bool(genesis_weight))
        self.nodes[pk] = record
        self._log("register_node", pk, None, f"weight={genesis_weight}")
        return replace(record)

    def node(self, pk: bytes) -> NodeRecord:
        try:
            return replace(self.nodes[pk])
        except KeyError:
            raise NotFoundError(f"unknown node {pk.hex()[:16]}") from None

    def weight(self, pk: bytes) -> int:
        record = self.nodes.get(pk)
        return record.weight if record else 0

    def total_weight(self) -> int:
        return sum(r.weight for r in self.nodes.values())

    # -- ACL ------------------------------------------------------------

    def nonce(self, pk: bytes) -> int:
        return self._nonces.get(pk, 0)

    def request_payload(self, op: str, owner_pk: bytes, *parts) -> bytes:
        """Bytes the owner must sign to authorize its next ACL mutation."""
        return acl_payload(op, owner_pk, self.nonce(owner_pk), *parts)

    def sign_request(self, keys: vrf.KeyPair, op: str, *parts) -> bytes:
        return vrf.sign(keys.sk, self.request_payload(op, keys.pk, *parts))

    def _authenticate(self, op: str, owner_pk: bytes, signature: bytes, *parts):
        payload = self.request_payload(op, owner_pk, *parts)
        if not vrf.verify_signature(owner_pk, payload, signature):
            raise AuthError(f"{op}: signature does not verify under the owner key")

    def _consume_nonce(self, owner_pk: bytes):
        self._nonces[owner_pk] = self.nonce(owner_pk) + 1

    def _entry(self, owner_pk: bytes) -> AclEntry:
        return self.acl.setdefault(owner_pk, AclEntry(owner_pk))

    def entry(self, owner_pk: bytes) -> AclEntry:
        e = self.acl.get(owner_pk) or AclEntry(owner_pk)
        return AclEntry(e.owner_pk, set(e.owned), {k: set(v) for k, v in e.granted_to.items()})

    @_serialized
    def acl_register_data(self, owner_pk: bytes, content_hash: ContentHash, signature: bytes) -> AclEntry:
        self._authenticate("register", owner_pk, signature, content_hash)
        self._consume_nonce(owner_pk)
        self._entry(owner_pk).owned.add(content_hash)
        self._log("acl_register", owner_pk, content_hash, "")
        return self.entry(owner_pk)

    @_serialized
    def acl_grant(
        self, owner_pk: bytes, grantee_pk: bytes, content_hash: ContentHash, signature: bytes
    ) -> AclEntry:
        self._authenticate("grant", owner_pk, signature, grantee_pk, content_hash)
        entry = self._owned_entry(owner_pk, content_hash)
        self._consume_nonce(owner_pk)
        entry.granted_to.setdefault(grantee_pk, set()).add(content_hash)
        self._log("acl_grant", owner_pk, content_hash, f"grantee={grantee_pk.hex()}")
        return self.entry(owner_pk)

    @_serialized
    def acl_revoke(
        self, owner_pk: bytes, grantee_pk: bytes, content_hash: ContentHash, signature: bytes
    ) -> AclEntry:
        self._authenticate("revoke", owner_pk, signature, grantee_pk, content_hash)
        entry = self._owned_entry(owner_pk, content_hash)
        self._consume_nonce(owner_pk)
        grants = entry.granted_to.get(grantee_pk)
        if grants is not None:
            grants.discard(content_hash)
            if not grants:
                del entry.granted_to[grantee_pk]
        self._log("acl_revoke", owner_pk, content_hash, f"grantee={grantee_pk.hex()}")
        return self.entry(owner_pk)

    def _owned_entry(self, owner_pk: bytes, content_hash: ContentHash) -> AclEntry:
        entry = self.acl.get(owner_pk)
        if entry is None or content_hash not in entry.owned:
            raise OwnershipError(f"{content_hash.hex} is not owned by {owner_pk.hex()[:16]}")
        return entry

    def acl_check(self, pk: bytes, content_hash: ContentHash) -> bool:
        own = self.acl.get(pk)
        if own is not None and content_hash in own.owned:
            return True
        return any(content_hash in e.granted_to.get(pk, ()) for e in self.acl.values())

    def owners_of(self, content_hash: ContentHash) -> list[bytes]:
        return [pk for pk, e in self.acl.items() if content_hash in e.owned]

    @_serialized
    def acl_update_hash(
        self, owner_pk: bytes, old_hash: ContentHash, new_hash: ContentHash, signature: bytes
    ) -> AclEntry:
        entry = self.acl.get(owner_pk)
        if entry is None or old_hash not in entry.owned:
            raise NotFoundError(f"{old_hash.hex} is not owned by {owner_pk.hex()[:16]}")
        self._authenticate("update", owner_pk, signature, old_hash, new_hash)
        self._consume_nonce(owner_pk)
        self._rewrite_hash(entry, old_hash, new_hash)
        return self.entry(owner_pk)

    def _rewrite_hash(self, entry: AclEntry, old: ContentHash, new: ContentHash):
        if old == new or old not in entry.owned:
            return
        entry.owned.discard(old)
        entry.owned.add(new)
        for grants in entry.granted_to.values():
            if old in grants:
                grants.discard(old)
                grants.add(new)
        self._log("acl_update_hash", entry.owner_pk, new, f"old={old.hex}")

    # -- election -------------------------------------------------------

    def _peer_candidates(
        self, seed: RoundSeed, proofs: Sequence[SortitionProof], W: int
    ) -> list[Candidate]:
        seen: set[bytes] = set()
        out = []
        for sp in proofs:
            if sp.node_pk in seen or sp.node_pk not in self.nodes:
                continue
            j = verify_sortition(sp.node_pk, sp, seed, self.weight(sp.node_pk), W)
            if j < 1:
                continue
            seen.add(sp.node_pk)
            out.append(Candidate(sp.node_pk, j, priority(replace(sp, j=j))))
        return out

    @_serialized
    def elect_master(
        self, round: int, seed: RoundSeed, proofs: Sequence[SortitionProof]
    ) -> MasterElection:
        """Every peer verifies the proofs on its own and votes for the best priority."""
        W = self.total_weight()
        ballots: list[Candidate | None] = []
        candidates: list[Candidate] = []
        for _peer in self.peers:
            candidates = self._peer_candidates(seed, proofs, W)
            best = min(candidates, key=lambda c: (c.priority.value, c.pk), default=None)
            ballots.append(best)
        tally = Counter(b.pk for b in ballots if b is not None)
        election = MasterElection(round, None, None, tuple(candidates), 0, seed.value)
        if tally:
            winner_pk, votes = max(tally.items(), key=lambda kv: (kv[1], [-b for b in kv[0]]))
            if votes >= quorum_threshold(self.quorum_size):
                winner = next(b for b in ballots if b is not None and b.pk == winner_pk)
                message = election_message(round, winner_pk, seed.value)
                certificate = tuple(
                    (peer.pk, vrf.sign(peer.sk, message))
                    for peer, ballot in zip(self.peers, ballots)
                    if ballot is not None and ballot.pk == winner_pk
                )
                election = replace(
                    election,
                    master_pk=winner_pk,
                    winning_priority=winner.priority,
                    quorum_votes=votes,
                    certificate=certificate,
                )
                self.elections[round] = election
        self._log(
            "election",
            election.master_pk,
            None,
            f"candidates={len(election.valid_candidates)};votes={election.quorum_votes}",
            round=round,
        )
        return election

    def verify_consensus(self, election: MasterElection) -> bool:
        """Check a certificate carries enough distinct valid peer signatures."""
        if election.master_pk is None:
            return False
        peer_keys = {p.pk for p in self.peers}
        message = election_message(election.round, election.master_pk, election.seed_value)
        signers = {
            pk
            for pk, sig in election.certificate
            if pk in peer_keys and vrf.verify_signature(pk, message, sig)
        }
        return len(signers) >= quorum_threshold(self.quorum_size)

    # -- post-query bookkeeping -------------------------------------------

    @_serialized
    def record_worker_service(self, pks: Iterable[bytes]):
        pks = list(pks)
        for pk in pks:
            if pk not in self.nodes:
                raise NotFoundError(f"unknown node {pk.hex()[:16]}")
        for pk in pks:
            record = self.nodes[pk]
            record.weight = 1
            record.served_as_worker = True
            self._log("worker_service", pk, None, "weight=1")

    @_serialized
    def record_master_service(self, master_pk: bytes):
        if master_pk not in self.nodes:
            raise NotFoundError(f"unknown node {master_pk.hex()[:16]}")
        self.nodes[master_pk].weight = 0
        self._log("master_service", master_pk, None, "weight=0")

    def verify_master_result(self, master_pk: bytes, signed_result: sealing.SignedResult) -> bool:
        election = self.elections.get(signed_result.round)
        if election is None or election.master_pk != master_pk:
            return False
        return sealing.verify_result_signature(master_pk, signed_result)

    @_serialized
    def apply_query_result(
        self,
        master_pk: bytes,
        signed_result: sealing.SignedResult,
        worker_pks: Sequence[bytes],
        hash_updates: Sequence[tuple[bytes, ContentHash, ContentHash]] = (),
        registrations: Sequence[tuple[bytes, ContentHash]] = (),
    ) -> bool:
        """Verify the master's signature, then update weights and ACL hashes together.

        ``hash_updates`` holds ``(owner_pk, old, new)`` triples for tables the
        query rewrote; ``registrations`` holds ``(owner_pk, hash)`` pairs for
        data the query created on behalf of an already authorized user.
        Nothing changes when the signature check fails.
        """
        ok = self.verify_master_result(master_pk, signed_result)
        self._log(
            "verify_result",
            master_pk,
            None,
            "ok" if ok else "rejected",
            round=signed_result.round,
        )
        if not ok:
            return False
        self.record_worker_service(worker_pks)
        self.record_master_service(master_pk)
        for owner_pk, old, new in hash_updates:
            self._rewrite_hash(self._entry(owner_pk), old, new)
        if not hash_updates:
            self._log("acl_update_hash", None, None, "unchanged", round=signed_result.round)
        for owner_pk, h in registrations:
            self._entry(owner_pk).owned.add(h)
            self._log("acl_register", owner_pk, h, "by-query")
        return True

    # -- audit ------------------------------------------------------------

    def _log(self, op: str, pk: bytes | None, h: ContentHash | None, detail: str, round=None):
        self.audit.append(
            AuditRecord(
                self.current_round if round is None else round,
                op,
                pk.hex() if pk else "",
                h.hex if h else "",
                detail,
            )
        )

    def log_event(self, op: str, pk: bytes | None = None, h: ContentHash | None = None, detail=""):
        with self._lock:
            self._log(op, pk, h, detail)

    def export_audit(self) -> str:
        """Audit log as CSV lines ``round,op,pk,hash,detail``."""
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        for record in self.audit:
            writer.writerow(record.as_row())
        return buf.getvalue()

    # -- persistence ------------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "quorum_size": self.quorum_size,
            "peer_seed": self.peer_seed.hex(),
            "current_round": self.current_round,
            "nodes": [
                {"pk": r.pk.hex(), "weight": r.weight, "served_as_worker": r.served_as_worker}
                for r in self.nodes.values()
            ],
            "acl": [
                {
                    "owner_pk": e.owner_pk.hex(),
                    "owned": sorted(h.hex for h in e.owned),
                    "granted_to": {
                        g.hex(): sorted(h.hex for h in hs) for g, hs in sorted(e.granted_to.items())
                    },
                }
                for e in self.acl.values()
            ],
            "nonces": {pk.hex(): n for pk, n in sorted(self._nonces.items())},
            "audit": [r.as_row() for r in self.audit],
        }

    @classmethod
    def from_dict(cls, d: dict) -> Ledger:
        ledger = cls(d["quorum_size"], bytes.fromhex(d["peer_seed"]))
        ledger.current_round = d["current_round"]
        for n in d["nodes"]:
            pk = bytes.fromhex(n["pk"])
            ledger.nodes[pk] = NodeRecord(pk, n["weight"], n["served_as_worker"])
        for e in d["acl"]:
            owner = bytes.fromhex(e["owner_pk"])
            ledger.acl[owner] = AclEntry(
                owner,
                {ContentHash.from_hex(h) for h in e["owned"]},
                {
                    bytes.fromhex(g): {ContentHash.from_hex(h) for h in hs}
                    for g, hs in e["granted_to"].items()
                },
            )
        ledger._nonces = {bytes.fromhex(k): v for k, v in d["nonces"].items()}
        ledger.audit = [
            AuditRecord(int(r[0]), r[1], r[2], r[3], r[4]) for r in d["audit"]
        ]
        return ledger
