"""Owner-signed ACL changes, and how grants follow a table as its content hash changes."""

from web3db import vrf
from web3db.errors import OwnershipError
from web3db.ledger import Ledger
from web3db.storage import ContentHash

alice, bob = vrf.keygen(b"a" * 32), vrf.keygen(b"b" * 32)
ledger = Ledger(quorum_size=4)
v1 = ContentHash.of(b"orders v1")
v2 = ContentHash.of(b"orders v2")

ledger.acl_register_data(alice.pk, v1, ledger.sign_request(alice, "register", v1))
print("bob may read v1 before grant:", ledger.acl_check(bob.pk, v1))

ledger.acl_grant(alice.pk, bob.pk, v1, ledger.sign_request(alice, "grant", bob.pk, v1))
print("bob may read v1 after grant: ", ledger.acl_check(bob.pk, v1))

try:
    ledger.acl_grant(bob.pk, bob.pk, v1, ledger.sign_request(bob, "grant", bob.pk, v1))
except OwnershipError as exc:
    print("bob granting alice's data:   ", type(exc).__name__, exc)

# An INSERT produces a new manifest hash; the grant moves with it.
ledger.acl_update_hash(alice.pk, v1, v2, ledger.sign_request(alice, "update", v1, v2))
print("bob may read v2 after update:", ledger.acl_check(bob.pk, v2))

ledger.acl_revoke(alice.pk, bob.pk, v2, ledger.sign_request(alice, "revoke", bob.pk, v2))
print("bob may read v2 after revoke:", ledger.acl_check(bob.pk, v2))

print("\naudit log:")
print(ledger.export_audit())
