import pytest

from cipherloop import paillier
from cipherloop.crypto_core import Rng
from cipherloop.engine.transport import Trace
from cipherloop.ot import ot_choose, ot_prime


def enc(pk, m, rng):
    return paillier.encrypt(pk, m, rng)


def test_ot_examples(ahe_keys, rng):
    pk, sk = ahe_keys
    s0, s1 = enc(pk, 10, rng), enc(pk, 20, rng)
    assert ot_choose(s0, s1, 0, sk, rng) == 10
    assert ot_choose(s0, s1, 1, sk, rng) == 20
    assert ot_choose([s0, s0, s1], [s1, s1, s0], [0, 1, 1], sk, rng) == [10, 20, 10]


def test_ot_prime_examples(ahe_keys, rng):
    pk, sk = ahe_keys
    s0, s1 = enc(pk, 10, rng), enc(pk, 20, rng)
    for i, want in ((0, 10), (1, 20)):
        out = ot_prime(s0, s1, i, pk, rng)
        assert paillier.decrypt(sk, out) == want
        assert out.value not in (s0.value, s1.value)


def test_ot_random(ahe_keys):
    pk, sk = ahe_keys
    rng = Rng(31)
    sig = [(rng.below(pk.N), rng.below(pk.N)) for _ in range(100)]
    bits = [rng.bit() for _ in sig]
    s0 = [enc(pk, a, rng) for a, _ in sig]
    s1 = [enc(pk, b, rng) for _, b in sig]
    assert ot_choose(s0, s1, bits, sk, rng) == [p[i] for p, i in zip(sig, bits)]
    out = ot_prime(s0, s1, bits, pk, rng)
    assert [paillier.decrypt(sk, c) for c in out] == [p[i] for p, i in zip(sig, bits)]
    assert not {c.value for c in out} & {c.value for c in s0 + s1}


def test_non_bit_selector(ahe_keys, rng):
    pk, sk = ahe_keys
    c = enc(pk, 1, rng)
    with pytest.raises(ValueError):
        ot_choose(c, c, 2, sk, rng)
    with pytest.raises(ValueError):
        ot_choose([c], [c, c], [0], sk, rng)


def test_empty_vectors_send_nothing(ahe_keys, rng):
    pk, sk = ahe_keys
    trace = Trace()
    assert ot_choose([], [], [], sk, rng, trace) == []
    assert ot_prime([], [], [], pk, rng, trace) == []
    assert trace.frames == 0


def test_ot_prime_transcript(ahe_keys, rng):
    pk, sk = ahe_keys
    trace = Trace()
    ot_prime([enc(pk, 1, rng)] * 2, [enc(pk, 2, rng)] * 2, [0, 1], pk, rng, trace)
    assert [(r.src, r.dst, r.msg_type) for r in trace.rows] == [("A", "B", "OTP_MASKED"), ("B", "A", "OTP_REPLY")]
    # the sender only sees ciphertexts of i and of the refreshed value
    assert trace.rows[1].kinds == {"ahe"}


def test_ot_transcript(ahe_keys, rng):
    pk, sk = ahe_keys
    trace = Trace()
    ot_choose([enc(pk, 1, rng)], [enc(pk, 2, rng)], [1], sk, rng, trace)
    assert [(r.src, r.dst, r.msg_type) for r in trace.rows] == [
        ("A", "B", "OT_MASKED"), ("B", "A", "OT_SELECT"), ("A", "B", "OT_MASK")
    ]
    assert trace.rows[1].kinds == {"ahe"}
