"""Weighted sortition: who gets selected, how often, and how peers check the claim."""

from web3db import vrf
from web3db.sortition import genesis_seed, next_seed, priority, retry_seed, sortition, verify_sortition

nodes = [vrf.keygen(bytes([i]) * 32) for i in range(6)]
# Weights stay fixed here; rotating them after each query is the ledger's job.
weights = [1, 1, 1, 0, 1, 1]
W = sum(weights)
seed = genesis_seed(vrf.digest(b"demo genesis"))


def run_election(seed):
    best = None
    for i, (keys, w) in enumerate(zip(nodes, weights)):
        sp = sortition(keys.sk, seed, w, W)
        pr = priority(sp)
        if pr is not None:
            print(f"  node {i} w={w}: j={sp.j} verified j={verify_sortition(keys.pk, sp, seed, w, W)} priority={pr.value.hex()[:12]}")
            if best is None or pr < best[1]:
                best = (i, pr)
    return best


for _ in range(4):
    print(f"round {seed.round}  seed {seed.value.hex()[:16]}")
    for retry in range(16):
        # An empty election is rerun under a publicly derivable retry seed.
        used = retry_seed(seed, retry)
        best = run_election(used)
        if best is not None:
            break
        print(f"  retry {retry}: nobody selected")
    master = best[0]
    print(f"  master: node {master}")
    # The master's VRF over the seed it won with becomes the next round's seed.
    seed = next_seed(used, nodes[master].sk)

sp = sortition(nodes[0].sk, seed, 1, W)
forged = sp.__class__(sp.node_pk, bytes(32), sp.proof, sp.j, sp.round)
print("forged hash verifies to j =", verify_sortition(nodes[0].pk, forged, seed, 1, W))
