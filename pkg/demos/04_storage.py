"""Tables as content-addressed blocks, replicated over a ring of storage nodes."""

from web3db import datasets
from web3db.errors import UnavailableError
from web3db.storage import BlockStore, get_table, put_table

store = BlockStore(node_count=6, replication=3)
orders = datasets.generate("orders", 300, seed=1)
manifest_hash = put_table(store, orders, rows_per_block=64)
print("manifest:", manifest_hash)

first_block = store.holders(manifest_hash)
print("manifest replicas on nodes:", first_block)

# Same content, same address.
print("re-put gives same hash:", put_table(store, orders, rows_per_block=64) == manifest_hash)

for n in first_block[:2]:
    store.fail_node(n)
print("two replicas down, round trip ok:", get_table(store, manifest_hash) == orders)
store.fail_node(first_block[2])
try:
    store.get(manifest_hash)
except UnavailableError as exc:
    print("all replicas down:", type(exc).__name__)
