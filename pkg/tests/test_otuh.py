from __future__ import annotations

import json

import numpy as np
import pytest

from cvqds.bits import RandomBits, make_generator
from cvqds.gf2poly import Gf2Poly, is_irreducible
from cvqds.otuh import (
    Forge,
    KeyBundle,
    KeyReuseError,
    MessagePacket,
    Tamper,
    forge_success_estimate,
    forged_document,
    keygen_split,
    run_protocol,
    sign,
    verify,
)


def _setup(n=16, m=128, seed=0):
    src = RandomBits(seed)
    bundles = keygen_split(n, src)
    return src, bundles, src.take(m)


def test_key_shares_xor_to_signer_keys():
    src = RandomBits(1)
    for _ in range(50):
        a, b, c = keygen_split(12, src)
        assert np.array_equal(b.X ^ c.X, a.X)
        assert np.array_equal(b.Y ^ c.Y, a.Y)
        assert not np.array_equal(a.X, b.X)
        assert (a.role, b.role, c.role) == ("signer", "recipient-B", "recipient-C")


def test_recipient_shares_marginally_uniform():
    src = RandomBits(2)
    draws = np.array([keygen_split(4, src)[1].X for _ in range(10_000)])
    freq = draws.mean(axis=0)
    assert np.all(np.abs(freq - 0.5) < 3 * np.sqrt(0.25 / 10_000) + 1e-3)


def test_keygen_gives_up_after_retries():
    class Constant:
        def take(self, n):
            return np.zeros(n, dtype=np.uint8)

    with pytest.raises(RuntimeError):
        keygen_split(4, Constant(), max_retries=3)


def test_bundle_shape_checked():
    with pytest.raises(ValueError):
        KeyBundle(np.zeros(4, np.uint8), np.zeros(7, np.uint8), "signer")
    with pytest.raises(ValueError):
        KeyBundle(np.zeros(4, np.uint8), np.zeros(8, np.uint8), "eve")


def test_zero_document_signature_structure():
    src, (a, b, c), _ = _setup(n=10)
    y = a.Y.copy()
    packet, taps = sign(np.zeros(40, np.uint8), a, src)
    assert packet.sig.size == 20
    assert np.array_equal(packet.sig ^ y, np.concatenate([np.zeros(10, np.uint8), taps]))
    assert is_irreducible(Gf2Poly.from_tap_bits(taps))


def test_honest_sign_verify_many():
    src = RandomBits(3)
    for _ in range(1000):
        a, b, c = keygen_split(16, src)
        packet, _ = sign(src.take(128), a, src)
        assert verify(packet, b, c.shares())
        assert verify(packet, c, b.shares())


def test_one_time_use_enforced():
    src, (a, b, c), doc = _setup()
    packet, _ = sign(doc, a, src)
    with pytest.raises(KeyReuseError):
        sign(doc, a, src)
    verify(packet, b, c.shares())
    with pytest.raises(KeyReuseError):
        verify(packet, b, c.shares())


def test_roles_enforced():
    src, (a, b, c), doc = _setup()
    with pytest.raises(ValueError):
        sign(doc, b, src)
    packet, _ = sign(doc, a, src)
    with pytest.raises(ValueError):
        verify(packet, a, b.shares())


def test_flipping_polynomial_half_of_signature_rejects():
    n = 8
    src = RandomBits(4)
    for pos in range(n, 2 * n):
        for _ in range(20):
            a, b, c = keygen_split(n, src)
            packet, _ = sign(src.take(32), a, src)
            sig = packet.sig.copy()
            sig[pos] ^= 1
            assert not verify(MessagePacket(packet.doc, sig), b, c.shares())


def test_reducible_decrypted_polynomial_rejects_without_error():
    src, (a, b, c), doc = _setup(n=8)
    packet, taps = sign(doc, a, src)
    # force the decrypted taps to all zeros, i.e. x^8, which is reducible
    sig = packet.sig.copy()
    sig[8:] ^= taps
    assert not verify(MessagePacket(packet.doc, sig), b, c.shares())


def test_doc_tamper_acceptance_bounded():
    n, m, trials = 8, 32, 4000
    src = RandomBits(5)
    rng = make_generator(6)
    accepted = 0
    for _ in range(trials):
        a, b, c = keygen_split(n, src)
        packet, _ = sign(src.take(m), a, src)
        doc = packet.doc.copy()
        doc[int(rng.integers(m))] ^= 1
        accepted += verify(MessagePacket(doc, packet.sig), c, b.shares())
    bound = m * 2.0 ** (1 - n)
    assert accepted / trials <= bound + 3 * np.sqrt(bound * (1 - bound) / trials)


def test_recipient_symmetry():
    src = RandomBits(7)
    for i in range(300):
        a, b, c = keygen_split(8, src)
        packet, _ = sign(src.take(24), a, src)
        if i % 2:
            packet = packet.with_doc(packet.doc ^ (src.take(24) & src.take(24)))
        b2 = KeyBundle(b.X, b.Y, b.role)
        c2 = KeyBundle(c.X, c.Y, c.role)
        assert verify(packet, b, c.shares()) == verify(packet, c2, b2.shares())


def test_run_protocol_honest():
    src, bundles, doc = _setup()
    tr = run_protocol(doc, bundles, source=src)
    assert (tr.bob_accept, tr.charlie_accept, tr.aborted) == (True, True, False)
    steps = [e["step"] for e in tr.events]
    assert steps == ["sign", "forward", "return-keys", "verify", "verify"]


def test_run_protocol_tamper_forwarded_doc_caught():
    src, bundles, doc = _setup(seed=8)
    tr = run_protocol(doc, bundles, Tamper(5, "bob-charlie"), src)
    assert tr.bob_accept is True and tr.charlie_accept is False


def test_run_protocol_tamper_before_bob_aborts():
    src, bundles, doc = _setup(seed=9)
    tr = run_protocol(doc, bundles, Tamper(0, "alice-bob"), src)
    assert tr.bob_accept is False and tr.charlie_accept is None and tr.aborted
    assert tr.events[-1]["step"] == "abort"


def test_run_protocol_oracle_forgery_succeeds():
    src, bundles, doc = _setup(n=10, m=100, seed=10)
    tr = run_protocol(doc, bundles, Forge("oracle"), src)
    assert tr.charlie_accept is True
    forwarded = [e for e in tr.events if e["step"] == "forward"][0]["doc"]
    sent = [e for e in tr.events if e["step"] == "sign"][0]["doc"]
    assert forwarded != sent


def test_forged_document_keeps_hash_when_divisible():
    src = RandomBits(11)
    a, b, c = keygen_split(10, src)
    packet, taps = sign(src.take(100), a, src)
    p = Gf2Poly.from_tap_bits(taps)
    other = Gf2Poly.from_exponents(10, 3, 0)
    forged = forged_document(packet.doc, [other, p])
    assert verify(packet.with_doc(forged), c, b.shares())


def test_forged_document_too_long():
    with pytest.raises(ValueError):
        forged_document(np.zeros(10, np.uint8), [Gf2Poly.from_exponents(10, 3, 0)])


def test_transcript_jsonl():
    src, bundles, doc = _setup(n=4, m=16)
    lines = run_protocol(doc, bundles, source=src).to_jsonl().splitlines()
    records = [json.loads(line) for line in lines]
    assert records[-1] == {"aborted": False, "bob_accept": True, "charlie_accept": True}


def test_forge_success_within_bound():
    rate = forge_success_estimate(10, 100, trials=1500, seed=1)
    assert 0 < rate <= 100 * 2.0 ** -9


def test_forge_success_with_leaked_bits_grows():
    base = forge_success_estimate(8, 40, trials=800, seed=2)
    leaky = forge_success_estimate(8, 40, trials=800, secrecy_deficit=3, seed=2)
    assert leaky > base
    assert leaky <= 40 * 2.0 ** (1 - (8 - 3)) + 3 * np.sqrt(0.25 / 800)


def test_forge_bound_linear_in_m():
    assert 200 * 2.0 ** -9 == 2 * (100 * 2.0 ** -9)


def test_forge_preconditions():
    with pytest.raises(ValueError):
        forge_success_estimate(21, 100, 10)
    with pytest.raises(ValueError):
        forge_success_estimate(10, 10, 10)
