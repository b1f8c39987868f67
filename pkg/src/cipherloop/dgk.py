"""DGK cryptosystem: small plaintext space Z_u with a cheap encrypted zero-test.

Key structure: n = p*q with u * v_p | p - 1 and u * v_q | q - 1, where u is a
prime plaintext modulus and v_p, v_q are t_param-bit primes. g has order
u*v_p*v_q and h has order v_p*v_q in Z_n^*, so c^{v_p} mod p == 1 exactly when
the plaintext is 0 mod u.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import gmpy2

from .crypto_core import (
    Rng,
    decode_int,
    encode_int,
    gen_prime,
    is_probable_prime,
    modinv,
    next_prime,
    sample_below,
)
from .errors import DecodeError, KeyMismatch, MessageOutOfRange

FINGERPRINT_LEN = 8
MAX_TABLE = 1 << 16


@dataclass(frozen=True, eq=False)
class DgkPublicKey:
    n: int
    g: int
    h: int
    u: int
    t_param: int
    fingerprint: bytes = field(init=False, repr=False)

    def __post_init__(self):
        fp = hashlib.sha256(b"dgk" + encode_int(self.n)).digest()[:FINGERPRINT_LEN]
        object.__setattr__(self, "fingerprint", fp)

    def __eq__(self, other):
        return isinstance(other, DgkPublicKey) and other.n == self.n

    def __hash__(self):
        return hash(("dgk", self.n))

    def encrypt(self, m: int, rng: Rng) -> DGKCiphertext:
        return dgk_encrypt(self, m, rng)

    def to_bytes(self) -> bytes:
        return b"".join(encode_int(v) for v in (self.n, self.g, self.h, self.u, self.t_param))

    @classmethod
    def from_bytes(cls, buf, offset: int = 0) -> tuple[DgkPublicKey, int]:
        vals = []
        for _ in range(5):
            v, offset = decode_int(buf, offset)
            vals.append(v)
        return cls(*vals), offset


@dataclass(frozen=True, eq=False)
class DgkPrivateKey:
    public_key: DgkPublicKey
    p: int
    q: int
    v_p: int
    v_q: int
    _table: dict | None = field(default=None, repr=False)

    def is_zero(self, c: DGKCiphertext) -> bool:
        return is_zero(self, c)

    def decrypt(self, c: DGKCiphertext) -> int:
        return dgk_decrypt(self, c)


@dataclass(frozen=True, eq=False)
class DGKCiphertext:
    public_key: DgkPublicKey
    value: int

    def __eq__(self, other):
        return (
            isinstance(other, DGKCiphertext)
            and other.public_key == self.public_key
            and other.value == self.value
        )

    def __hash__(self):
        return hash((self.public_key.n, self.value))

    def __add__(self, other):
        return dgk_add(self, other)

    def __sub__(self, other):
        return dgk_sub(self, other)

    def __mul__(self, k: int):
        return dgk_cmlt(k, self)

    __rmul__ = __mul__

    def to_bytes(self) -> bytes:
        return encode_int(self.value) + self.public_key.fingerprint

    @classmethod
    def from_bytes(cls, buf, keyring, offset: int = 0) -> tuple[DGKCiphertext, int]:
        value, off = decode_int(buf, offset)
        fp = bytes(buf[off : off + FINGERPRINT_LEN])
        if len(fp) != FINGERPRINT_LEN:
            raise DecodeError("truncated fingerprint")
        try:
            pk = keyring[fp]
        except KeyError:
            raise KeyMismatch("DGK ciphertext under an unknown key") from None
        return cls(pk, value), off + FINGERPRINT_LEN


def _prime_with_factor(bits: int, factor: int, rng: Rng) -> int:
    """Prime p of exactly ``bits`` bits with factor | p - 1."""
    spare = bits - factor.bit_length()
    if spare < 2:
        raise ValueError(f"{bits}-bit primes cannot hold a {factor.bit_length()}-bit factor")
    while True:
        w = rng.bits(spare) | (1 << (spare - 1))
        w += w & 1  # keep p odd: factor is odd, so w must be even
        p = factor * w + 1
        if p.bit_length() == bits and is_probable_prime(p, rng):
            return p


def _element_of_order(p: int, order_factors: tuple[int, ...], rng: Rng) -> int:
    """Element of Z_p^* whose order is exactly prod(order_factors) (distinct primes)."""
    order = 1
    for f in order_factors:
        order *= f
    cof = (p - 1) // order
    while True:
        x = 2 + sample_below(p - 3, rng)
        y = int(gmpy2.powmod(x, cof, p))
        if all(gmpy2.powmod(y, order // f, p) != 1 for f in order_factors):
            return y


def _crt(ap: int, p: int, aq: int, q: int) -> int:
    return (ap + (aq - ap) * modinv(p, q) % q * p) % (p * q)


def dgk_keygen(
    bits: int,
    t_param: int,
    rng: Rng,
    plaintext_bits: int | None = None,
    u: int | None = None,
    with_table: bool | None = None,
) -> tuple[DgkPublicKey, DgkPrivateKey]:
    """Generate a DGK key pair.

    The plaintext modulus is the smallest prime >= 2^plaintext_bits (default
    t_param + 2) unless ``u`` is given explicitly.
    """
    if u is None:
        u = next_prime(1 << (plaintext_bits if plaintext_bits is not None else t_param + 2))
    half = bits // 2
    v_p = gen_prime(t_param, rng)
    v_q = gen_prime(t_param, rng)
    while v_q == v_p:
        v_q = gen_prime(t_param, rng)
    p = _prime_with_factor(half, u * v_p, rng)
    q = _prime_with_factor(bits - half, u * v_q, rng)
    while q == p:
        q = _prime_with_factor(bits - half, u * v_q, rng)
    n = p * q
    g = _crt(_element_of_order(p, (u, v_p), rng), p, _element_of_order(q, (u, v_q), rng), q)
    h = _crt(_element_of_order(p, (v_p,), rng), p, _element_of_order(q, (v_q,), rng), q)
    pk = DgkPublicKey(n, g, h, u, t_param)
    table = None
    if with_table or (with_table is None and u <= MAX_TABLE):
        gvp = int(gmpy2.powmod(g, v_p, p))
        table, acc = {}, 1
        for m in range(u):
            table[acc] = m
            acc = acc * gvp % p
    return pk, DgkPrivateKey(pk, p, q, v_p, v_q, table)


def dgk_encrypt(pk: DgkPublicKey, m: int, rng: Rng) -> DGKCiphertext:
    if not 0 <= m < pk.u:
        raise MessageOutOfRange(f"DGK plaintext must lie in [0, {pk.u})")
    r = rng.bits(5 * pk.t_param // 2)
    c = gmpy2.powmod(pk.g, m, pk.n) * gmpy2.powmod(pk.h, r, pk.n) % pk.n
    return DGKCiphertext(pk, int(c))


def _check(sk: DgkPrivateKey, c: DGKCiphertext) -> None:
    if c.public_key.fingerprint != sk.public_key.fingerprint:
        raise KeyMismatch("DGK ciphertext belongs to a different key")


def is_zero(sk: DgkPrivateKey, c: DGKCiphertext) -> bool:
    _check(sk, c)
    return gmpy2.powmod(c.value, sk.v_p, sk.p) == 1


def dgk_decrypt(sk: DgkPrivateKey, c: DGKCiphertext) -> int:
    """Full decryption by table lookup; only available for small u."""
    _check(sk, c)
    if sk._table is None:
        raise ValueError("full DGK decryption needs a lookup table (small u only)")
    return sk._table[int(gmpy2.powmod(c.value, sk.v_p, sk.p))]


def _same_key(c1: DGKCiphertext, c2: DGKCiphertext) -> None:
    if c1.public_key.fingerprint != c2.public_key.fingerprint:
        raise KeyMismatch("DGK ciphertexts under different keys")


def dgk_add(c1: DGKCiphertext, c2: DGKCiphertext) -> DGKCiphertext:
    _same_key(c1, c2)
    return DGKCiphertext(c1.public_key, c1.value * c2.value % c1.public_key.n)


def dgk_sub(c1: DGKCiphertext, c2: DGKCiphertext) -> DGKCiphertext:
    _same_key(c1, c2)
    n = c1.public_key.n
    return DGKCiphertext(c1.public_key, c1.value * modinv(c2.value, n) % n)


def dgk_cmlt(k: int, c: DGKCiphertext) -> DGKCiphertext:
    # non-negative multipliers are used unreduced: a wide mask also
    # re-randomizes the h-component
    pk = c.public_key
    if k < 0:
        k %= pk.u
    return DGKCiphertext(pk, int(gmpy2.powmod(c.value, k, pk.n)))


def dgk_rerandomize(c: DGKCiphertext, rng: Rng) -> DGKCiphertext:
    pk = c.public_key
    r = rng.bits(5 * pk.t_param // 2)
    return DGKCiphertext(pk, int(c.value * gmpy2.powmod(pk.h, r, pk.n) % pk.n))
