"""Keys, signatures and a verifiable random function.

The VRF is the unique-signature construction: the proof is a deterministic
Ed25519 signature over the input and the output hash is the SHA-256 digest
of that proof. Ed25519 signing is deterministic (RFC 8032), so for a fixed
key and input exactly one proof, and hence one hash, verifies.

Plain message signatures share the keys but use a different domain prefix,
so a signed protocol message can never double as a VRF proof.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from functools import lru_cache

from cryptography.exceptions import InvalidSignature
from cryptography.hazmat.primitives.asymmetric.ed25519 import (
    Ed25519PrivateKey,
    Ed25519PublicKey,
)

from .errors import KeyFormatError

HASHLEN = 256
KEY_SIZE = 32
PROOF_SIZE = 64

_VRF_DOMAIN = b"web3db/vrf/v1\x00"
_SIG_DOMAIN = b"web3db/sig/v1\x00"


def digest(data: bytes) -> bytes:
    """256-bit digest used for VRF hashes, message ids and content hashes."""
    return hashlib.sha256(data).digest()


@dataclass(frozen=True)
class KeyPair:
    pk: bytes
    sk: bytes

    def __repr__(self) -> str:
        return f"KeyPair(pk={self.pk.hex()[:16]}...)"


@dataclass(frozen=True)
class VrfOutput:
    hash: bytes
    proof: bytes

    def as_int(self) -> int:
        return int.from_bytes(self.hash, "big")


@lru_cache(maxsize=4096)
def _private_key(sk: bytes) -> Ed25519PrivateKey:
    if not isinstance(sk, (bytes, bytearray)) or len(sk) != KEY_SIZE:
        raise KeyFormatError(f"secret key must be {KEY_SIZE} bytes")
    return Ed25519PrivateKey.from_private_bytes(bytes(sk))


@lru_cache(maxsize=4096)
def _public_key(pk: bytes) -> Ed25519PublicKey | None:
    if not isinstance(pk, (bytes, bytearray)) or len(pk) != KEY_SIZE:
        return None
    try:
        return Ed25519PublicKey.from_public_bytes(bytes(pk))
    except ValueError:
        return None


def keygen(entropy: bytes) -> KeyPair:
    """Derive a key pair deterministically from 32 bytes of entropy."""
    if not isinstance(entropy, (bytes, bytearray)) or len(entropy) != KEY_SIZE:
        raise ValueError(f"entropy must be exactly {KEY_SIZE} bytes")
    sk = bytes(entropy)
    return KeyPair(pk=public_from_secret(sk), sk=sk)


def public_from_secret(sk: bytes) -> bytes:
    return _private_key(sk).public_key().public_bytes_raw()


def vrf_evaluate(sk: bytes, data: bytes) -> VrfOutput:
    proof = _private_key(sk).sign(_VRF_DOMAIN + data)
    return VrfOutput(hash=digest(proof), proof=proof)


def vrf_verify(pk: bytes, data: bytes, out: VrfOutput) -> bool:
    """Check that ``out`` is the VRF output of ``data`` under ``pk``. Never raises."""
    try:
        if len(out.proof) != PROOF_SIZE or len(out.hash) != HASHLEN // 8:
            return False
        if digest(out.proof) != out.hash:
            return False
        key = _public_key(pk)
        if key is None:
            return False
        key.verify(out.proof, _VRF_DOMAIN + data)
    except (InvalidSignature, TypeError, AttributeError):
        return False
    return True


def sign(sk: bytes, message: bytes) -> bytes:
    return _private_key(sk).sign(_SIG_DOMAIN + message)


def verify_signature(pk: bytes, message: bytes, signature: bytes) -> bool:
    key = _public_key(pk)
    if key is None or not isinstance(signature, (bytes, bytearray)):
        return False
    try:
        key.verify(bytes(signature), _SIG_DOMAIN + message)
    except InvalidSignature:
        return False
    return True
