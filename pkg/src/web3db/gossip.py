"""Synchronous-round gossip simulator with signed, de-duplicated messages.

Every node picks ``fanout`` random peers when the network is built and the
chosen links are used in both directions. A node that receives a message
checks the origin signature, drops anything it has already seen, stores the
payload in its inbox and forwards the message to its other neighbours on
the next hop.
"""

from __future__ import annotations

import json
import random
from collections import defaultdict
from dataclasses import dataclass, field, replace
from typing import Callable, Iterable, Sequence

from . import vrf
from .errors import NotFoundError


def message_id(payload: bytes, origin_pk: bytes, round: int) -> bytes:
    return vrf.digest(payload + origin_pk + round.to_bytes(8, "big"))


@dataclass(frozen=True)
class GossipMessage:
    msg_id: bytes
    origin_pk: bytes
    payload: bytes
    signature: bytes
    round: int = 0
    hop_count: int = 0

    @classmethod
    def create(cls, origin_sk: bytes, payload: bytes, round: int = 0) -> GossipMessage:
        origin_pk = vrf.public_from_secret(origin_sk)
        mid = message_id(payload, origin_pk, round)
        return cls(mid, origin_pk, payload, vrf.sign(origin_sk, mid + payload), round)

    def verify(self) -> bool:
        if self.msg_id != message_id(self.payload, self.origin_pk, self.round):
            return False
        return vrf.verify_signature(self.origin_pk, self.msg_id + self.payload, self.signature)


@dataclass(frozen=True)
class NetworkTopology:
    nodes: tuple[bytes, ...]
    chosen: dict[bytes, tuple[bytes, ...]]
    fanout: int

    def neighbours(self, node: bytes) -> tuple[bytes, ...]:
        return self._adjacency[node]

    @property
    def _adjacency(self) -> dict[bytes, tuple[bytes, ...]]:
        adj = self.__dict__.get("_adj_cache")
        if adj is None:
            links: dict[bytes, set[bytes]] = {n: set() for n in self.nodes}
            for a, peers in self.chosen.items():
                for b in peers:
                    links[a].add(b)
                    links[b].add(a)
            order = {n: i for i, n in enumerate(self.nodes)}
            adj = {n: tuple(sorted(s, key=order.__getitem__)) for n, s in links.items()}
            object.__setattr__(self, "_adj_cache", adj)
        return adj

    def edges(self) -> set[frozenset[bytes]]:
        return {frozenset((a, b)) for a, peers in self.chosen.items() for b in peers}

    def is_connected(self) -> bool:
        if not self.nodes:
            return True
        seen = {self.nodes[0]}
        frontier = [self.nodes[0]]
        while frontier:
            nxt = []
            for n in frontier:
                for m in self.neighbours(n):
                    if m not in seen:
                        seen.add(m)
                        nxt.append(m)
            frontier = nxt
        return len(seen) == len(self.nodes)


def build_network(node_pks: Sequence[bytes], fanout: int, rng_seed: bytes) -> NetworkTopology:
    nodes = tuple(node_pks)
    if len(nodes) < 2:
        raise ValueError("a gossip network needs at least two nodes")
    if len(set(nodes)) != len(nodes):
        raise ValueError("duplicate node ids")
    if fanout < 1 or fanout >= len(nodes):
        raise ValueError(f"fanout must lie in [1, {len(nodes) - 1}], got {fanout}")
    rng = random.Random(int.from_bytes(vrf.digest(bytes(rng_seed)), "big"))
    chosen = {}
    for n in nodes:
        others = [m for m in nodes if m != n]
        chosen[n] = tuple(rng.sample(others, fanout))
    return NetworkTopology(nodes, chosen, fanout)


@dataclass
class DeliveryTrace:
    msg_id: bytes
    first_hop: dict[bytes, int] = field(default_factory=dict)
    rejected: dict[bytes, int] = field(default_factory=dict)
    forwards: list[tuple[bytes, bytes]] = field(default_factory=list)
    hops: int = 0

    def delivered_fraction(self, nodes: Iterable[bytes]) -> float:
        nodes = list(nodes)
        return sum(n in self.first_hop for n in nodes) / len(nodes)

    def to_dict(self, nodes: Iterable[bytes]) -> dict:
        return {
            n.hex(): {"first_hop": self.first_hop.get(n), "rejected_count": self.rejected.get(n, 0)}
            for n in nodes
        }


Tamper = Callable[[bytes, GossipMessage], GossipMessage]


class GossipNetwork:
    """Inbox-holding simulator over a fixed topology.

    ``drop_prob`` drops each transmission independently (default: no loss).
    ``tamper`` maps node id to a function that rewrites messages that node
    forwards, modelling a malicious relay.
    """

    def __init__(
        self,
        topology: NetworkTopology,
        drop_prob: float = 0.0,
        rng_seed: bytes = b"",
        tamper: dict[bytes, Tamper] | None = None,
    ):
        if not 0.0 <= drop_prob < 1.0:
            raise ValueError("drop_prob must lie in [0, 1)")
        self.topology = topology
        self.drop_prob = drop_prob
        self.tamper = dict(tamper or {})
        self._rng = random.Random(int.from_bytes(vrf.digest(b"drop" + rng_seed), "big"))
        self._inbox: dict[bytes, dict[bytes, GossipMessage]] = {n: {} for n in topology.nodes}
        self._seen: dict[bytes, set[bytes]] = defaultdict(set)
        self.forward_log: list[tuple[bytes, bytes]] = []

    def broadcast(self, origin_sk: bytes, payload: bytes, round: int = 0) -> DeliveryTrace:
        msg = GossipMessage.create(origin_sk, payload, round)
        if msg.origin_pk not in self._inbox:
            raise NotFoundError("origin is not part of the topology")
        return self.inject(msg.origin_pk, msg)

    def inject(self, node: bytes, msg: GossipMessage) -> DeliveryTrace:
        """Hand ``msg`` to ``node`` and run hops until the network is quiet."""
        if node not in self._inbox:
            raise NotFoundError("unknown node")
        trace = DeliveryTrace(msg.msg_id)
        pending = [(None, node, msg)]
        hop = 0
        while pending:
            forwarding: list[tuple[bytes, GossipMessage]] = []
            for sender, receiver, m in pending:
                if self._receive(receiver, m, hop, trace):
                    forwarding.append((receiver, m))
            pending = []
            for relay, m in forwarding:
                out = m
                if relay in self.tamper:
                    out = self.tamper[relay](relay, m)
                out = replace(out, hop_count=hop + 1)
                self.forward_log.append((relay, m.msg_id))
                trace.forwards.append((relay, m.msg_id))
                for peer in self.topology.neighbours(relay):
                    if self.drop_prob and self._rng.random() < self.drop_prob:
                        continue
                    pending.append((relay, peer, out))
            if pending:
                hop += 1
        trace.hops = hop
        return trace

    def _receive(self, node: bytes, msg: GossipMessage, hop: int, trace: DeliveryTrace) -> bool:
        if msg.msg_id in self._seen[node]:
            return False
        if not msg.verify():
            trace.rejected[node] = trace.rejected.get(node, 0) + 1
            return False
        self._seen[node].add(msg.msg_id)
        self._inbox[node][msg.msg_id] = msg
        trace.first_hop[node] = hop
        return True

    def deliver_inbox(self, node: bytes) -> list[bytes]:
        if node not in self._inbox:
            raise NotFoundError("unknown node")
        box = self._inbox[node]
        return [box[k].payload for k in sorted(box)]

    def inbox_messages(self, node: bytes) -> list[GossipMessage]:
        box = self._inbox[node]
        return [box[k] for k in sorted(box)]

    def clear(self):
        for box in self._inbox.values():
            box.clear()
        self._seen.clear()
        self.forward_log.clear()


def trace_json(trace: DeliveryTrace, nodes: Iterable[bytes]) -> str:
    return json.dumps(trace.to_dict(nodes), sort_keys=True)
