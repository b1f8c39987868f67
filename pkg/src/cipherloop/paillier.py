"""Paillier additively homomorphic encryption with g = N + 1.

Plaintexts live in Z_N, ciphertexts in (Z_{N^2})^*. Ciphertexts carry a
reference to their public key; combining ciphertexts from different keys
raises :class:`KeyMismatch`.
"""
from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field

import gmpy2

from .crypto_core import Rng, decode_int, encode_int, gen_prime, modinv, sample_unit
from .errors import DecodeError, KeyMismatch, MessageOutOfRange

FINGERPRINT_LEN = 8


def fingerprint_of(modulus: int) -> bytes:
    return hashlib.sha256(b"ahe" + encode_int(modulus)).digest()[:FINGERPRINT_LEN]


@dataclass(frozen=True, eq=False)
class AhePublicKey:
    N: int
    nsquare: int = field(init=False, repr=False)
    fingerprint: bytes = field(init=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "nsquare", self.N * self.N)
        object.__setattr__(self, "fingerprint", fingerprint_of(self.N))

    @property
    def g(self) -> int:
        return self.N + 1

    def __eq__(self, other):
        return isinstance(other, AhePublicKey) and other.N == self.N

    def __hash__(self):
        return hash(self.N)

    def to_bytes(self) -> bytes:
        return encode_int(self.N)

    def encrypt(self, m: int, rng: Rng, r: int | None = None) -> AHECiphertext:
        return encrypt(self, m, rng, r)

    def encrypt_signed(self, m: int, rng: Rng) -> AHECiphertext:
        """Encrypt a signed integer, mapping negatives to the upper half of Z_N."""
        return encrypt(self, m % self.N, rng)

    def noise(self, rng: Rng) -> int:
        """Fresh r^N mod N^2 for r uniform in (Z_N)^*."""
        return int(gmpy2.powmod(sample_unit(self.N, rng), self.N, self.nsquare))

    def trivial(self, m: int) -> AHECiphertext:
        """Deterministic encryption (r = 1). Only for values that are public."""
        return AHECiphertext(self, (1 + (m % self.N) * self.N) % self.nsquare)


@dataclass(frozen=True, eq=False)
class AhePrivateKey:
    public_key: AhePublicKey
    p: int
    q: int
    lam: int = field(init=False, repr=False)
    mu: int = field(init=False, repr=False)

    def __post_init__(self):
        p, q = self.p, self.q
        if p == q:
            raise ValueError("p and q must be distinct")
        if p * q != self.public_key.N:
            raise ValueError("p*q does not match public modulus")
        lam = (p - 1) * (q - 1) // math.gcd(p - 1, q - 1)
        object.__setattr__(self, "lam", lam)
        object.__setattr__(self, "mu", modinv(lam, self.public_key.N))
        # CRT precomputation
        object.__setattr__(self, "_psq", p * p)
        object.__setattr__(self, "_qsq", q * q)
        object.__setattr__(self, "_hp", modinv(((p - 1) * q) % p, p))
        object.__setattr__(self, "_hq", modinv(((q - 1) * p) % q, q))
        object.__setattr__(self, "_pinv_q", modinv(p, q))

    def decrypt(self, c: AHECiphertext) -> int:
        return decrypt(self, c)

    def decrypt_signed(self, c: AHECiphertext) -> int:
        m = decrypt(self, c)
        N = self.public_key.N
        return m - N if m >= (N + 1) // 2 else m


@dataclass(frozen=True, eq=False)
class AHECiphertext:
    public_key: AhePublicKey
    value: int

    def __eq__(self, other):
        return (
            isinstance(other, AHECiphertext)
            and other.public_key == self.public_key
            and other.value == self.value
        )

    def __hash__(self):
        return hash((self.public_key.N, self.value))

    @property
    def fingerprint(self) -> bytes:
        return self.public_key.fingerprint

    def __add__(self, other: AHECiphertext) -> AHECiphertext:
        return add(self, other)

    def __sub__(self, other: AHECiphertext) -> AHECiphertext:
        return sub(self, other)

    def __neg__(self) -> AHECiphertext:
        return cmlt(-1, self)

    def __mul__(self, k: int) -> AHECiphertext:
        return cmlt(k, self)

    __rmul__ = __mul__

    def to_bytes(self) -> bytes:
        return encode_int(self.value) + self.fingerprint

    @classmethod
    def from_bytes(cls, buf, keyring, offset: int = 0) -> tuple[AHECiphertext, int]:
        value, off = decode_int(buf, offset)
        fp = bytes(buf[off : off + FINGERPRINT_LEN])
        if len(fp) != FINGERPRINT_LEN:
            raise DecodeError("truncated fingerprint")
        try:
            pk = keyring[fp]
        except KeyError:
            raise KeyMismatch("ciphertext under an unknown key") from None
        return cls(pk, value), off + FINGERPRINT_LEN


def keygen(bits: int, rng: Rng) -> tuple[AhePublicKey, AhePrivateKey]:
    if bits < 32:
        raise ValueError("key size must be at least 32 bits")
    half = bits // 2
    while True:
        p = gen_prime(half, rng)
        q = gen_prime(bits - half, rng)
        if p == q:
            continue
        N = p * q
        if N.bit_length() != bits or math.gcd(N, (p - 1) * (q - 1)) != 1:
            continue
        return keypair_from_primes(p, q)


def keypair_from_primes(p: int, q: int) -> tuple[AhePublicKey, AhePrivateKey]:
    pk = AhePublicKey(p * q)
    return pk, AhePrivateKey(pk, p, q)


def encrypt(pk: AhePublicKey, m: int, rng: Rng, r: int | None = None) -> AHECiphertext:
    if not 0 <= m < pk.N:
        raise MessageOutOfRange(f"plaintext must lie in [0, N), got {m}")
    rn = pk.noise(rng) if r is None else int(gmpy2.powmod(r, pk.N, pk.nsquare))
    # g^m = (1 + N)^m = 1 + mN mod N^2
    return AHECiphertext(pk, (1 + m * pk.N) * rn % pk.nsquare)


def _check(sk_or_pk, c: AHECiphertext) -> None:
    pk = sk_or_pk.public_key if isinstance(sk_or_pk, AhePrivateKey) else sk_or_pk
    if c.public_key.fingerprint != pk.fingerprint:
        raise KeyMismatch("ciphertext belongs to a different key")


def decrypt(sk: AhePrivateKey, c: AHECiphertext) -> int:
    """CRT decryption; observationally identical to :func:`decrypt_textbook`."""
    _check(sk, c)
    p, q = sk.p, sk.q
    mp = (int(gmpy2.powmod(c.value, p - 1, sk._psq)) - 1) // p * sk._hp % p
    mq = (int(gmpy2.powmod(c.value, q - 1, sk._qsq)) - 1) // q * sk._hq % q
    return mp + ((mq - mp) * sk._pinv_q % q) * p


def decrypt_textbook(sk: AhePrivateKey, c: AHECiphertext) -> int:
    """m = L(c^lambda mod N^2) * mu mod N with L(u) = (u - 1) / N."""
    _check(sk, c)
    N = sk.public_key.N
    u = int(gmpy2.powmod(c.value, sk.lam, sk.public_key.nsquare))
    return (u - 1) // N * sk.mu % N


def _same_key(c1: AHECiphertext, c2: AHECiphertext) -> None:
    if c1.public_key.fingerprint != c2.public_key.fingerprint:
        raise KeyMismatch("ciphertexts under different keys")


def add(c1: AHECiphertext, c2: AHECiphertext) -> AHECiphertext:
    _same_key(c1, c2)
    return AHECiphertext(c1.public_key, c1.value * c2.value % c1.public_key.nsquare)


def sub(c1: AHECiphertext, c2: AHECiphertext) -> AHECiphertext:
    _same_key(c1, c2)
    nsq = c1.public_key.nsquare
    return AHECiphertext(c1.public_key, c1.value * modinv(c2.value, nsq) % nsq)


def cmlt(k: int, c: AHECiphertext) -> AHECiphertext:
    pk = c.public_key
    return AHECiphertext(pk, int(gmpy2.powmod(c.value, k % pk.N, pk.nsquare)))


def refresh(pk: AhePublicKey, c: AHECiphertext, rng: Rng) -> AHECiphertext:
    """Re-randomize: same plaintext, fresh randomness (adds an encryption of 0)."""
    _check(pk, c)
    return AHECiphertext(pk, c.value * pk.noise(rng) % pk.nsquare)


def add_plain(c: AHECiphertext, k: int) -> AHECiphertext:
    """[[m]] -> [[m + k]] without fresh randomness."""
    pk = c.public_key
    return AHECiphertext(pk, c.value * (1 + (k % pk.N) * pk.N) % pk.nsquare)
