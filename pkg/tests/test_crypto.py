"""Deterministic mock crypto: round trips, coin calibration, size model."""

from __future__ import annotations

import math

import pytest

from qscale.crypto import HASH_BYTES, KeyRing, SizeModel, hash_data, local_coin


def test_hash_is_stable_and_sized() -> None:
    d = hash_data(b"abc")
    assert len(d) == HASH_BYTES == 32
    assert d == hash_data(b"abc")
    assert d != hash_data(b"abd")


def test_sign_verify_round_trip() -> None:
    ring = KeyRing(10, master_seed=42)
    sig = ring.sign(3, b"message")
    assert ring.verify(b"message", sig, 3)
    assert not ring.verify(b"other", sig, 3)
    assert not ring.verify(b"message", sig, 4)


def test_keyring_is_seed_deterministic() -> None:
    a = KeyRing(5, master_seed=7)
    b = KeyRing(5, master_seed=7)
    c = KeyRing(5, master_seed=8)
    assert a.sign(1, b"x") == b.sign(1, b"x")
    assert a.sign(1, b"x") != c.sign(1, b"x")


def test_aggregate_and_validate_multisig() -> None:
    ring = KeyRing(20, master_seed=1)
    sigs = [ring.sign(pid, b"block") for pid in (5, 2, 9, 14)]
    ms = ring.aggregate(sigs)
    assert ms.signers == (2, 5, 9, 14)
    assert ring.validate_multi_digest(hash_data(b"block"), ms)
    assert ring.validate(b"block", ms, (2, 5, 9, 14))
    assert not ring.validate_multi_digest(hash_data(b"other"), ms)


def test_aggregate_rejects_mixed_digests() -> None:
    ring = KeyRing(5, master_seed=1)
    s1 = ring.sign(1, hash_data(b"a"))
    s2 = ring.sign(2, hash_data(b"b"))
    with pytest.raises(ValueError):
        ring.aggregate([s1, s2])


def test_multisig_tamper_detection() -> None:
    ring = KeyRing(10, master_seed=3)
    ms = ring.aggregate([ring.sign(pid, b"payload") for pid in (1, 2, 3)])
    forged = type(ms)(ms.digest, (1, 2, 4), ms.tag)
    assert not ring.validate_multi_digest(hash_data(b"payload"), forged)


def test_vrf_prove_verify_round_trip() -> None:
    ring = KeyRing(8, master_seed=11)
    out = ring.vrf_prove(4, b"seed-epoch-9")
    assert len(out.value) == 32
    assert ring.vrf_verify(b"seed-epoch-9", out)
    assert not ring.vrf_verify(b"seed-epoch-8", out)


def test_vrf_rejects_forged_value() -> None:
    ring = KeyRing(8, master_seed=11)
    out = ring.vrf_prove(4, b"s")
    forged = type(out)(bytes(32), out.proof, out.prover, out.seed)
    assert not ring.vrf_verify(b"s", forged)
    alien = type(out)(out.value, out.proof, 5, out.seed)
    assert not ring.vrf_verify(b"s", alien)


def test_vrf_values_differ_across_processes_and_seeds() -> None:
    ring = KeyRing(8, master_seed=11)
    assert ring.vrf_value(1, b"s") != ring.vrf_value(2, b"s")
    assert ring.vrf_value(1, b"s") != ring.vrf_value(1, b"t")


def test_pid_bounds_are_enforced() -> None:
    ring = KeyRing(4, master_seed=0)
    with pytest.raises(ValueError):
        ring.sign(0, b"m")
    with pytest.raises(ValueError):
        ring.sign(5, b"m")


def test_local_coin_extremes() -> None:
    assert not local_coin(b"anything", 0.0)
    assert local_coin(b"anything", 1.0)


def test_local_coin_frequency() -> None:
    p = 0.134164
    hits = sum(local_coin(b"c" + i.to_bytes(4, "big"), p) for i in range(20000))
    sigma = math.sqrt(20000 * p * (1 - p))
    assert abs(hits - 20000 * p) < 5 * sigma


def test_size_model_reference_values() -> None:
    m = SizeModel()
    assert m.propose_bytes(500, 1) == 577
    assert m.forward_bytes(1) == 306
    assert m.vote_bytes() == 100
    assert m.message_bytes("disseminate", 500, 1) == 306
    assert m.message_bytes("propagate", 500, 1) == 306
    assert m.multisig_bytes(500) == 48 + 63
    with pytest.raises(ValueError):
        m.message_bytes("gossip", 500, 1)
