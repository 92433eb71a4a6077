"""Sign-then-encrypt envelope for query results returned by a master node.

The master signs ``digest(result) || round`` so ledger peers can confirm
authorship without seeing the payload, and encrypts the payload under a
per-round session key derived from its own VRF. Only the master can
derive the key; it hands the key to the querying user directly.
"""

from __future__ import annotations

from dataclasses import dataclass

from cryptography.exceptions import InvalidTag
from cryptography.hazmat.primitives.ciphers.aead import AESGCM

from . import vrf
from .errors import TamperError


@dataclass(frozen=True)
class SignedResult:
    result_digest: bytes
    round: int
    signature: bytes
    ciphertext: bytes
    nonce: bytes


def result_message(result_digest: bytes, round: int) -> bytes:
    return b"result" + result_digest + round.to_bytes(8, "big")


def session_key(master_sk: bytes, round: int) -> bytes:
    return vrf.vrf_evaluate(master_sk, b"result" + round.to_bytes(8, "big")).hash


def encrypt_result(master_sk: bytes, payload: bytes, round: int) -> SignedResult:
    result_digest = vrf.digest(payload)
    message = result_message(result_digest, round)
    # The key is fresh per (master, round), so a round-derived nonce is never reused
    # with different plaintexts unless the master re-seals its own round.
    nonce = vrf.digest(b"nonce" + message)[:12]
    ciphertext = AESGCM(session_key(master_sk, round)).encrypt(nonce, payload, message)
    return SignedResult(
        result_digest=result_digest,
        round=round,
        signature=vrf.sign(master_sk, message),
        ciphertext=ciphertext,
        nonce=nonce,
    )


def verify_result_signature(master_pk: bytes, signed: SignedResult) -> bool:
    return vrf.verify_signature(
        master_pk, result_message(signed.result_digest, signed.round), signed.signature
    )


def decrypt_result(key: bytes, signed: SignedResult) -> bytes:
    message = result_message(signed.result_digest, signed.round)
    try:
        payload = AESGCM(key).decrypt(signed.nonce, signed.ciphertext, message)
    except (InvalidTag, ValueError) as exc:
        raise TamperError("result ciphertext failed authentication") from exc
    if vrf.digest(payload) != signed.result_digest:
        raise TamperError("result digest mismatch")
    return payload
