"""Big-integer plumbing: modular arithmetic, primes, randomness, byte encoding.

Integers are plain Python ``int``. Modular exponentiation and inversion go
through gmpy2 and are converted back so callers never see ``mpz``.
"""
from __future__ import annotations

import random
import secrets
import struct
from dataclasses import dataclass

import gmpy2

from .errors import DecodeError, NotInvertible

MR_ROUNDS = 40

_SMALL_PRIMES = [p for p in range(3, 2000) if all(p % d for d in range(2, int(p**0.5) + 1))]


class Rng:
    """Randomness source.

    With a seed the whole output stream is reproducible; without one it draws
    from OS entropy. ``split`` derives an independent child generator, which is
    how each party gets its own stream from a single run seed.
    """

    def __init__(self, seed: int | None = None):
        self.seed = seed
        self._r: random.Random = random.Random(seed) if seed is not None else secrets.SystemRandom()

    @property
    def deterministic(self) -> bool:
        return self.seed is not None

    def bits(self, k: int) -> int:
        """Uniform integer in [0, 2^k)."""
        if k <= 0:
            return 0
        return self._r.getrandbits(k)

    def below(self, bound: int) -> int:
        return sample_below(bound, self)

    def bit(self) -> int:
        return self._r.getrandbits(1)

    def shuffle(self, items: list) -> None:
        # Fisher-Yates on top of our own rejection sampler
        for i in range(len(items) - 1, 0, -1):
            j = sample_below(i + 1, self)
            items[i], items[j] = items[j], items[i]

    def split(self) -> Rng:
        if self.seed is None:
            return Rng(None)
        return Rng(self.bits(64))

    def __repr__(self) -> str:
        return f"Rng(seed={self.seed!r})"


@dataclass(frozen=True)
class ModRing:
    modulus: int

    def __post_init__(self):
        if self.modulus <= 1:
            raise ValueError("modulus must be > 1")

    def reduce(self, x: int) -> int:
        return x % self.modulus

    def add(self, a: int, b: int) -> int:
        return (a + b) % self.modulus

    def sub(self, a: int, b: int) -> int:
        return (a - b) % self.modulus

    def mul(self, a: int, b: int) -> int:
        return (a * b) % self.modulus

    def pow(self, a: int, e: int) -> int:
        return modexp(a, e, self.modulus)

    def inv(self, a: int) -> int:
        return modinv(a, self.modulus)


def modexp(base: int, exp: int, m: int) -> int:
    if m <= 1:
        raise ValueError("modulus must be > 1")
    if exp < 0:
        return int(gmpy2.powmod(modinv(base, m), -exp, m))
    return int(gmpy2.powmod(base, exp, m))


def modinv(a: int, m: int) -> int:
    if m <= 1:
        raise ValueError("modulus must be > 1")
    try:
        return int(gmpy2.invert(a % m, m))
    except ZeroDivisionError:
        raise NotInvertible(f"gcd({a}, {m}) != 1") from None


def sample_below(bound: int, rng: Rng) -> int:
    """Uniform integer in [0, bound) by rejection, no modulo bias."""
    if bound < 1:
        raise ValueError("bound must be >= 1")
    if bound == 1:
        return 0
    k = (bound - 1).bit_length()
    while True:
        x = rng.bits(k)
        if x < bound:
            return x


def sample_unit(m: int, rng: Rng) -> int:
    """Uniform element of (Z_m)^*."""
    while True:
        x = sample_below(m, rng)
        if x and gmpy2.gcd(x, m) == 1:
            return x


def is_probable_prime(n: int, rng: Rng | None = None, rounds: int = MR_ROUNDS) -> bool:
    if n < 2:
        return False
    if n in (2, 3):
        return True
    if n % 2 == 0:
        return False
    for p in _SMALL_PRIMES:
        if n == p:
            return True
        if n % p == 0:
            return False
    rng = rng or Rng(n)
    d, s = n - 1, 0
    while d % 2 == 0:
        d //= 2
        s += 1
    for _ in range(rounds):
        a = 2 + sample_below(n - 3, rng)
        x = int(gmpy2.powmod(a, d, n))
        if x == 1 or x == n - 1:
            continue
        for _ in range(s - 1):
            x = x * x % n
            if x == n - 1:
                break
        else:
            return False
    return True


def gen_prime(bits: int, rng: Rng) -> int:
    """Probable prime with exactly ``bits`` bits."""
    if bits < 2:
        raise ValueError("bits must be >= 2")
    while True:
        cand = rng.bits(bits) | (1 << (bits - 1)) | 1
        if is_probable_prime(cand, rng):
            return cand


def next_prime(n: int) -> int:
    """Smallest prime >= n."""
    n = max(n, 2)
    if n == 2:
        return 2
    if n % 2 == 0:
        n += 1
    while not is_probable_prime(n):
        n += 2
    return n


# Wire format: 4-byte big-endian length, then minimal big-endian magnitude.

def encode_int(x: int) -> bytes:
    if x < 0:
        raise ValueError("only non-negative integers are encoded")
    body = x.to_bytes((x.bit_length() + 7) // 8, "big")
    return struct.pack(">I", len(body)) + body


def decode_int(buf: bytes | memoryview, offset: int = 0) -> tuple[int, int]:
    """Decode one integer at ``offset``; returns (value, new_offset)."""
    if offset + 4 > len(buf):
        raise DecodeError("truncated length prefix")
    (n,) = struct.unpack_from(">I", buf, offset)
    start = offset + 4
    end = start + n
    if end > len(buf):
        raise DecodeError("truncated integer body")
    body = bytes(buf[start:end])
    if n and body[0] == 0:
        raise DecodeError("non-minimal integer encoding")
    return int.from_bytes(body, "big"), end
