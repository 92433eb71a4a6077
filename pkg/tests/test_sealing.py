from dataclasses import replace

import pytest

from web3db import vrf
from web3db.errors import TamperError
from web3db.sealing import decrypt_result, encrypt_result, session_key, verify_result_signature

MASTER = vrf.keygen(b"\x41" * 32)
OTHER = vrf.keygen(b"\x42" * 32)


def test_round_trip():
    signed = encrypt_result(MASTER.sk, b"result rows", 7)
    assert decrypt_result(session_key(MASTER.sk, 7), signed) == b"result rows"
    assert signed.ciphertext != b"result rows"


def test_flipped_ciphertext_is_tamper():
    signed = encrypt_result(MASTER.sk, b"payload", 1)
    ct = bytearray(signed.ciphertext)
    ct[0] ^= 1
    with pytest.raises(TamperError):
        decrypt_result(session_key(MASTER.sk, 1), replace(signed, ciphertext=bytes(ct)))


def test_wrong_key_is_tamper():
    signed = encrypt_result(MASTER.sk, b"payload", 1)
    with pytest.raises(TamperError):
        decrypt_result(session_key(MASTER.sk, 2), signed)


def test_signature_only_under_master():
    signed = encrypt_result(MASTER.sk, b"payload", 3)
    assert verify_result_signature(MASTER.pk, signed)
    assert not verify_result_signature(OTHER.pk, signed)
    assert not verify_result_signature(MASTER.pk, replace(signed, round=4))


def test_session_key_is_per_round_and_deterministic():
    assert session_key(MASTER.sk, 1) == session_key(MASTER.sk, 1)
    assert session_key(MASTER.sk, 1) != session_key(MASTER.sk, 2)
    assert encrypt_result(MASTER.sk, b"x", 1) == encrypt_result(MASTER.sk, b"x", 1)
