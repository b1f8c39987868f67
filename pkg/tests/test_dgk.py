import pytest

from cipherloop.crypto_core import Rng, is_probable_prime
from cipherloop.dgk import (
    DgkPublicKey,
    dgk_add,
    dgk_cmlt,
    dgk_decrypt,
    dgk_encrypt,
    dgk_keygen,
    dgk_rerandomize,
    dgk_sub,
    is_zero,
)
from cipherloop.errors import KeyMismatch, MessageOutOfRange


def test_key_structure(tiny_dgk):
    pk, sk = tiny_dgk
    u = pk.u
    assert u == 257 and is_probable_prime(u)
    for prime, v in ((sk.p, sk.v_p), (sk.q, sk.v_q)):
        assert (prime - 1) % (u * v) == 0
        # g has order u*v modulo each prime, h has order v
        assert pow(pk.g, u * v, prime) == 1 and pow(pk.g, v, prime) != 1 and pow(pk.g, u, prime) != 1
        assert pow(pk.h, v, prime) == 1 and pk.h % prime != 1
    assert pk.n == sk.p * sk.q


def test_zero_test_exhaustive(tiny_dgk, rng):
    pk, sk = tiny_dgk
    assert is_zero(sk, dgk_encrypt(pk, 0, rng))
    for m in range(1, pk.u):
        c = dgk_encrypt(pk, m, rng)
        assert not is_zero(sk, c)
        assert dgk_decrypt(sk, c) == m


def test_keygen_reproducible():
    a, _ = dgk_keygen(128, 16, Rng(4), plaintext_bits=8)
    b, _ = dgk_keygen(128, 16, Rng(4), plaintext_bits=8)
    assert (a.n, a.g, a.h) == (b.n, b.g, b.h)


def test_homomorphic_ops(tiny_dgk, rng):
    pk, sk = tiny_dgk
    e = lambda m: dgk_encrypt(pk, m, rng)  # noqa: E731
    assert is_zero(sk, dgk_sub(e(1), e(1)))
    assert dgk_decrypt(sk, dgk_add(e(100), e(200))) == 300 % pk.u
    assert dgk_decrypt(sk, dgk_cmlt(3, e(5))) == 15
    assert dgk_decrypt(sk, dgk_cmlt(-1, e(5))) == pk.u - 5
    assert dgk_decrypt(sk, dgk_rerandomize(e(9), rng)) == 9


def test_masking_keeps_zero_and_nonzero(tiny_dgk, rng):
    pk, sk = tiny_dgk
    for _ in range(200):
        r = rng.bits(32)
        if r % pk.u == 0:
            continue
        assert is_zero(sk, dgk_cmlt(r, dgk_encrypt(pk, 0, rng)))
        m = 1 + rng.below(pk.u - 1)
        assert not is_zero(sk, dgk_cmlt(r, dgk_encrypt(pk, m, rng)))


def test_zero_test_agrees_with_table_on_random_plaintexts(tiny_dgk, rng):
    pk, sk = tiny_dgk
    for _ in range(1000):
        m = rng.below(pk.u)
        c = dgk_encrypt(pk, m, rng)
        assert is_zero(sk, c) == (dgk_decrypt(sk, c) == 0)


def test_default_profile(dgk_keys, rng):
    pk, sk = dgk_keys
    assert pk.u.bit_length() == 83 and is_probable_prime(pk.u)
    assert is_zero(sk, dgk_encrypt(pk, 0, rng))
    assert not is_zero(sk, dgk_encrypt(pk, 5, rng))
    with pytest.raises(ValueError):
        dgk_decrypt(sk, dgk_encrypt(pk, 5, rng))


def test_errors(tiny_dgk, dgk_keys, rng):
    pk, sk = tiny_dgk
    with pytest.raises(MessageOutOfRange):
        dgk_encrypt(pk, pk.u, rng)
    with pytest.raises(KeyMismatch):
        is_zero(dgk_keys[1], dgk_encrypt(pk, 0, rng))


def test_public_key_wire(tiny_dgk):
    pk, _ = tiny_dgk
    back, off = DgkPublicKey.from_bytes(pk.to_bytes())
    assert back == pk and back.fingerprint == pk.fingerprint and back.u == pk.u
