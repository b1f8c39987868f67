import math

import pytest
from hypothesis import given, settings, strategies as st

from cipherloop import paillier
from cipherloop.crypto_core import Rng
from cipherloop.errors import DecodeError, KeyMismatch, MessageOutOfRange


def textbook_encrypt(N: int, m: int, r: int) -> int:
    """(1 + N)^m * r^N mod N^2 with plain pow, independent of the library path."""
    nsq = N * N
    return pow(N + 1, m, nsq) * pow(r, N, nsq) % nsq


def test_toy_key_exhaustive_z35():
    pk, sk = paillier.keypair_from_primes(5, 7)
    assert pk.N == 35 and pk.g == 36
    rng = Rng(0)
    for m in range(35):
        assert paillier.decrypt(sk, paillier.encrypt(pk, m, rng)) == m
        for r in (1, 2, 3, 4, 6, 8, 34):
            assert paillier.encrypt(pk, m, rng, r=r).value == textbook_encrypt(35, m, r)


def test_equal_primes_rejected():
    with pytest.raises(ValueError):
        paillier.keypair_from_primes(7, 7)


def test_keygen_reproducible():
    a, _ = paillier.keygen(512, Rng(3))
    b, _ = paillier.keygen(512, Rng(3))
    assert a.N == b.N and a.N.bit_length() == 512


def test_encrypt_zero_with_unit_noise_is_one(ahe_keys):
    pk, sk = ahe_keys
    assert paillier.encrypt(pk, 0, Rng(1), r=1).value == 1
    assert paillier.decrypt(sk, paillier.AHECiphertext(pk, 1)) == 0


def test_round_trip_and_range(ahe_keys, rng):
    pk, sk = ahe_keys
    assert paillier.decrypt(sk, paillier.encrypt(pk, 2, rng)) == 2
    for _ in range(1000):
        m = rng.below(pk.N)
        assert paillier.decrypt(sk, paillier.encrypt(pk, m, rng)) == m
    with pytest.raises(MessageOutOfRange):
        paillier.encrypt(pk, pk.N, rng)
    with pytest.raises(MessageOutOfRange):
        paillier.encrypt(pk, -1, rng)


def test_crt_matches_textbook_decryption(ahe_keys, rng):
    pk, sk = ahe_keys
    for _ in range(100):
        c = paillier.encrypt(pk, rng.below(pk.N), rng)
        assert paillier.decrypt(sk, c) == paillier.decrypt_textbook(sk, c)


def test_add_sub_cmlt_examples(ahe_keys, rng):
    pk, sk = ahe_keys
    e = lambda m: paillier.encrypt(pk, m, rng)  # noqa: E731
    assert paillier.decrypt(sk, paillier.add(e(2), e(3))) == 5
    assert paillier.decrypt(sk, paillier.sub(e(2), e(3))) == pk.N - 1
    assert paillier.decrypt(sk, paillier.cmlt(7, e(6))) == 42
    assert paillier.decrypt(sk, paillier.cmlt(0, e(6))) == 0
    assert paillier.decrypt(sk, paillier.cmlt(1, e(6))) == 6
    assert sk.decrypt_signed(e(2) - e(5)) == -3


def test_fold_of_100_ciphertexts(ahe_keys, rng):
    pk, sk = ahe_keys
    ms = [rng.below(pk.N) for _ in range(100)]
    acc = paillier.encrypt(pk, 0, rng)
    for m in ms:
        acc = acc + paillier.encrypt(pk, m, rng)
    assert paillier.decrypt(sk, acc) == sum(ms) % pk.N


@settings(max_examples=50, deadline=None)
@given(st.integers(0), st.integers(0), st.integers())
def test_homomorphism_property(ahe_keys, a, b, k):
    pk, sk = ahe_keys
    rng = Rng(a ^ b)
    a, b = a % pk.N, b % pk.N
    ca, cb = paillier.encrypt(pk, a, rng), paillier.encrypt(pk, b, rng)
    assert paillier.decrypt(sk, ca + cb) == (a + b) % pk.N
    assert paillier.decrypt(sk, paillier.cmlt(k, ca)) == k * a % pk.N


def test_refresh(ahe_keys, rng):
    pk, sk = ahe_keys
    c = paillier.encrypt(pk, 17, rng)
    seen = {c.value}
    for _ in range(1000):
        r = paillier.refresh(pk, c, rng)
        assert r.value not in seen
        seen.add(r.value)
    assert paillier.decrypt(sk, paillier.refresh(pk, c, rng)) == 17


def test_key_mismatch(ahe_keys, small_ahe_keys, rng):
    pk, sk = ahe_keys
    pk2, sk2 = small_ahe_keys
    c2 = paillier.encrypt(pk2, 1, rng)
    with pytest.raises(KeyMismatch):
        paillier.decrypt(sk, c2)
    with pytest.raises(KeyMismatch):
        paillier.add(paillier.encrypt(pk, 1, rng), c2)


def test_wire_roundtrip(ahe_keys, rng):
    pk, sk = ahe_keys
    c = paillier.encrypt(pk, 99, rng)
    buf = c.to_bytes()
    back, off = paillier.AHECiphertext.from_bytes(buf, {pk.fingerprint: pk})
    assert back == c and off == len(buf)
    with pytest.raises(KeyMismatch):
        paillier.AHECiphertext.from_bytes(buf, {})
    with pytest.raises(DecodeError):
        paillier.AHECiphertext.from_bytes(buf[:-3], {pk.fingerprint: pk})


def test_lambda_and_mu_consistent(ahe_keys):
    pk, sk = ahe_keys
    p, q = sk.p, sk.q
    assert sk.lam == (p - 1) * (q - 1) // math.gcd(p - 1, q - 1)
    assert sk.lam * sk.mu % pk.N == 1
