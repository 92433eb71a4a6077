"""Signed gossip over a random overlay, with one relay tampering with what it forwards."""

from web3db import vrf
from web3db.gossip import GossipMessage, GossipNetwork, build_network

keys = [vrf.keygen(bytes([9, i]) + bytes(30)) for i in range(30)]
pks = [k.pk for k in keys]
topo = build_network(pks, 3, b"demo overlay")
print("overlay connected:", topo.is_connected(), " edges:", len(topo.edges()))

net = GossipNetwork(topo)
trace = net.broadcast(keys[0].sk, b"SELECT COUNT(*) FROM orders", round=1)
hops = sorted(trace.first_hop.values())
print(f"honest broadcast reached {trace.delivered_fraction(pks):.0%} in {hops[-1]} hops, {len(net.forward_log)} forwards")


def tamper(node, msg):
    return GossipMessage(msg.msg_id, msg.origin_pk, b"DROP TABLE orders", msg.signature, msg.round, msg.hop_count)


evil = pks[1]
bad = GossipNetwork(topo, tamper={evil: tamper})
trace = bad.broadcast(keys[0].sk, b"SELECT COUNT(*) FROM orders", round=2)
accepted = {m.payload for pk in pks if pk != evil for m in bad.inbox_messages(pk)}
print("payloads accepted by honest nodes:", accepted)
print(f"delivery with one tampering relay: {trace.delivered_fraction(pks):.0%}")
