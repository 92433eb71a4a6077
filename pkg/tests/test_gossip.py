import json
from dataclasses import replace

import networkx as nx
import pytest

from oracles import bfs_depths
from web3db import vrf
from web3db.errors import NotFoundError
from web3db.gossip import GossipMessage, GossipNetwork, build_network, trace_json

KEYS = [vrf.keygen(bytes([7, i]) + bytes(30)) for i in range(50)]
PKS = [k.pk for k in KEYS]


def _graph(topo):
    g = nx.Graph()
    g.add_nodes_from(topo.nodes)
    g.add_edges_from(tuple(e) for e in topo.edges())
    return g


def test_two_nodes_fanout_one():
    topo = build_network(PKS[:2], 1, b"s")
    assert topo.neighbours(PKS[0]) == (PKS[1],)
    assert topo.neighbours(PKS[1]) == (PKS[0],)


def test_topology_deterministic_and_well_formed():
    a = build_network(PKS, 3, b"seed")
    assert a.chosen == build_network(PKS, 3, b"seed").chosen
    assert a.chosen != build_network(PKS, 3, b"other").chosen
    for n, peers in a.chosen.items():
        assert len(peers) == 3 and len(set(peers)) == 3 and n not in peers


@pytest.mark.parametrize("nodes,fanout", [(1, 1), (3, 0), (3, 3)])
def test_build_network_argument_errors(nodes, fanout):
    with pytest.raises(ValueError):
        build_network(PKS[:nodes], fanout, b"s")


def test_connectivity_matches_networkx_and_is_common():
    connected = 0
    for s in range(100):
        topo = build_network(PKS, 3, s.to_bytes(4, "big"))
        assert topo.is_connected() == nx.is_connected(_graph(topo))
        connected += topo.is_connected()
    assert connected >= 99


def test_broadcast_reaches_all_at_bfs_depth():
    topo = build_network(PKS, 3, b"bfs")
    net = GossipNetwork(topo)
    trace = net.broadcast(KEYS[0].sk, b"hello", 1)
    assert trace.delivered_fraction(PKS) == 1.0
    depth = bfs_depths({n: topo.neighbours(n) for n in PKS}, PKS[0])
    assert trace.first_hop == depth
    assert max(trace.first_hop.values()) <= nx.diameter(_graph(topo)) + 1
    assert len(net.forward_log) == len(set(net.forward_log)) == 50


def test_tampering_relay_is_contained():
    topo = build_network(PKS, 3, b"tamper")
    evil = PKS[5]
    net = GossipNetwork(topo, tamper={evil: lambda node, m: replace(m, payload=m.payload + b"!")})
    trace = net.broadcast(KEYS[0].sk, b"payload", 0)
    forwarded_ids = {mid for _, mid in trace.forwards}
    assert forwarded_ids == {trace.msg_id}
    for pk in PKS:
        for m in net.inbox_messages(pk):
            assert m.verify() and m.payload == b"payload"
    assert sum(trace.rejected.values()) >= 1


def test_forged_injection_rejected_everywhere_reachable():
    topo = build_network(PKS[:10], 3, b"f")
    net = GossipNetwork(topo)
    good = GossipMessage.create(KEYS[1].sk, b"x", 0)
    bad = replace(good, payload=b"y")
    trace = net.inject(PKS[2], bad)
    assert trace.first_hop == {} and trace.forwards == []
    assert trace.rejected == {PKS[2]: 1}


def test_inbox_dedup_and_ordering():
    topo = build_network(PKS[:8], 2, b"inbox")
    net = GossipNetwork(topo)
    msg = GossipMessage.create(KEYS[0].sk, b"one", 0)
    net.inject(PKS[0], msg)
    net.inject(PKS[3], msg)
    assert net.deliver_inbox(PKS[4]) == [b"one"]
    m2 = GossipMessage.create(KEYS[1].sk, b"two", 0)
    net.inject(PKS[1], m2)
    want = [m.payload for m in sorted([msg, m2], key=lambda m: m.msg_id)]
    assert net.deliver_inbox(PKS[4]) == want
    with pytest.raises(NotFoundError):
        net.deliver_inbox(b"nobody")


def test_drop_probability_hook_loses_deliveries():
    topo = build_network(PKS, 3, b"drop")
    lossy = GossipNetwork(topo, drop_prob=0.9, rng_seed=b"r")
    trace = lossy.broadcast(KEYS[0].sk, b"m", 0)
    assert trace.delivered_fraction(PKS) < 1.0
    with pytest.raises(ValueError):
        GossipNetwork(topo, drop_prob=1.0)


def test_message_id_binds_round():
    a = GossipMessage.create(KEYS[0].sk, b"p", 1)
    b = GossipMessage.create(KEYS[0].sk, b"p", 2)
    assert a.msg_id != b.msg_id
    assert not replace(a, round=2).verify()


def test_trace_json_shape():
    topo = build_network(PKS[:4], 1, b"j")
    net = GossipNetwork(topo)
    trace = net.broadcast(KEYS[0].sk, b"m", 0)
    data = json.loads(trace_json(trace, PKS[:4]))
    assert set(data) == {pk.hex() for pk in PKS[:4]}
    assert all(set(v) == {"first_hop", "rejected_count"} for v in data.values())
