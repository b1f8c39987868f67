"""Labeled homomorphic encryption on top of Paillier.

A fresh ciphertext is a secret-shared pair ``(m - b, [[b]])`` where the
secret ``b = F(usk, label)`` is derived from the encryptor's key and a unique
label. Pairs support additions, plaintext scalings and exactly one level of
ciphertext-ciphertext multiplication, whose output is a single Paillier
ciphertext ("collapsed"). Decryption needs the labeled program that produced
the ciphertext, because the secrets must be pushed through that program.
"""
from __future__ import annotations

import hashlib
import hmac
import secrets as _secrets
import struct
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Union

import gmpy2

from . import paillier
from .crypto_core import Rng, decode_int, encode_int
from .errors import (
    BudgetExceeded,
    DecodeError,
    DepthExceeded,
    KeyMismatch,
    LabelMismatch,
    LabelReuse,
    MessageOutOfRange,
)
from .paillier import AHECiphertext, AhePrivateKey, AhePublicKey

USK_BYTES = 32

TAG_PAIR = 0x01
TAG_COLLAPSED = 0x02


# -- labels and keys ---------------------------------------------------------


@dataclass(frozen=True, order=True)
class Label:
    party: str
    signal: str
    t: int
    index: int

    def to_bytes(self) -> bytes:
        out = bytearray()
        for s in (self.party, self.signal):
            raw = s.encode()
            out += struct.pack(">I", len(raw)) + raw
        out += encode_int(self.t) + encode_int(self.index)
        return bytes(out)

    def __str__(self) -> str:
        return f"{self.party}/{self.signal}/{self.t}/{self.index}"


@dataclass(frozen=True, eq=False)
class MasterKeys:
    mpk: AhePublicKey
    msk: AhePrivateKey


@dataclass(frozen=True)
class UserKey:
    owner: str
    usk: bytes = field(repr=False)
    upk: AHECiphertext = field(repr=False)

    @property
    def key_id(self) -> bytes:
        return hashlib.sha256(b"usk" + self.usk).digest()[:8]


def init(bits: int, rng: Rng) -> MasterKeys:
    pk, sk = paillier.keygen(bits, rng)
    return MasterKeys(pk, sk)


def keygen(mpk: AhePublicKey, owner: str, rng: Rng) -> UserKey:
    """User key pair; ``upk`` is the usk encrypted under the master key."""
    if mpk.N.bit_length() <= 8 * USK_BYTES:
        raise BudgetExceeded(f"a {8 * USK_BYTES}-bit user key does not fit below a {mpk.N.bit_length()}-bit N")
    usk = rng.bits(8 * USK_BYTES).to_bytes(USK_BYTES, "big") if rng.deterministic else _secrets.token_bytes(USK_BYTES)
    return UserKey(owner, usk, paillier.encrypt(mpk, int.from_bytes(usk, "big"), rng))


def recover_usk(msk: AhePrivateKey, upk: AHECiphertext) -> bytes:
    return paillier.decrypt(msk, upk).to_bytes(USK_BYTES, "big")


def prf(usk: bytes, label: Label, N: int) -> int:
    """Pseudorandom element of Z_N: HMAC-SHA256 in counter mode, rejection sampled."""
    nbits = N.bit_length()
    nbytes = (nbits + 7) // 8
    msg = label.to_bytes()
    ctr = 0
    while True:
        stream = bytearray()
        while len(stream) < nbytes:
            stream += hmac.new(usk, struct.pack(">I", ctr) + msg, hashlib.sha256).digest()
            ctr += 1
        x = int.from_bytes(stream[:nbytes], "big") >> (8 * nbytes - nbits)
        if x < N:
            return x


class LabelRegistry:
    """Records every (user key, label) used for an encryption; refuses reuse."""

    def __init__(self):
        self._seen: set[tuple[bytes, Label]] = set()
        self.counts: Counter[str] = Counter()

    def use(self, user: UserKey, label: Label) -> None:
        key = (user.key_id, label)
        if key in self._seen:
            raise LabelReuse(f"label {label} already used with key of {user.owner}")
        self._seen.add(key)
        self.counts[user.owner] += 1

    def __len__(self) -> int:
        return len(self._seen)


# -- ciphertexts -------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class LabPair:
    a: int
    beta: AHECiphertext
    provenance: frozenset | None = None

    @property
    def public_key(self) -> AhePublicKey:
        return self.beta.public_key


@dataclass(frozen=True, eq=False)
class LabCollapsed:
    alpha: AHECiphertext
    provenance: frozenset | None = None

    @property
    def public_key(self) -> AhePublicKey:
        return self.alpha.public_key


LabCiphertext = Union[LabPair, LabCollapsed]


@dataclass(frozen=True)
class OfflinePart:
    label: Label
    b: int
    beta: AHECiphertext


def encrypt_offline(mpk: AhePublicKey, user: UserKey, label: Label, rng: Rng,
                    registry: LabelRegistry | None = None) -> OfflinePart:
    if registry is not None:
        registry.use(user, label)
    b = prf(user.usk, label, mpk.N)
    return OfflinePart(label, b, paillier.encrypt(mpk, b, rng))


def encrypt_online(off: OfflinePart, m: int) -> LabPair:
    N = off.beta.public_key.N
    if not 0 <= m < N:
        raise MessageOutOfRange("LabHE plaintext must lie in [0, N)")
    return LabPair((m - off.b) % N, off.beta, frozenset([off.label]))


def encrypt(mpk: AhePublicKey, user: UserKey, label: Label, m: int, rng: Rng,
            registry: LabelRegistry | None = None) -> LabPair:
    return encrypt_online(encrypt_offline(mpk, user, label, rng, registry), m % mpk.N)


def constant(mpk: AhePublicKey, c: int) -> LabPair:
    """A public plaintext as a pair with zero secret."""
    return LabPair(c % mpk.N, mpk.trivial(0), frozenset())


def _prov(*cs) -> frozenset | None:
    out: set = set()
    for c in cs:
        if c.provenance is None:
            return None
        out |= c.provenance
    return frozenset(out)


def _same_key(c1, c2) -> None:
    if c1.public_key.fingerprint != c2.public_key.fingerprint:
        raise KeyMismatch("LabHE ciphertexts under different master keys")


def eval_add(c1: LabCiphertext, c2: LabCiphertext) -> LabCiphertext:
    _same_key(c1, c2)
    N = c1.public_key.N
    prov = _prov(c1, c2)
    if isinstance(c1, LabPair) and isinstance(c2, LabPair):
        return LabPair((c1.a + c2.a) % N, c1.beta + c2.beta, prov)
    if isinstance(c1, LabCollapsed) and isinstance(c2, LabCollapsed):
        return LabCollapsed(c1.alpha + c2.alpha, prov)
    pair, coll = (c1, c2) if isinstance(c1, LabPair) else (c2, c1)
    return LabPair(pair.a, pair.beta + coll.alpha, prov)


def eval_cmlt(k: int, c: LabCiphertext) -> LabCiphertext:
    N = c.public_key.N
    k %= N
    prov = frozenset() if k == 0 and c.provenance is not None else c.provenance
    if isinstance(c, LabPair):
        return LabPair(k * c.a % N, paillier.cmlt(k, c.beta), prov)
    return LabCollapsed(paillier.cmlt(k, c.alpha), prov)


def eval_sub(c1: LabCiphertext, c2: LabCiphertext) -> LabCiphertext:
    return eval_add(c1, eval_cmlt(-1, c2))


def add_plain(c: LabCiphertext, k: int) -> LabCiphertext:
    """Add a public constant. Pairs absorb it into ``a``."""
    if isinstance(c, LabPair):
        return LabPair((c.a + k) % c.public_key.N, c.beta, c.provenance)
    return LabCollapsed(paillier.add_plain(c.alpha, k), c.provenance)


def eval_mlt(c1: LabCiphertext, c2: LabCiphertext, rng: Rng | None = None) -> LabCollapsed:
    """[[a1*a2]] (+) a1*beta2 (+) a2*beta1 = [[m1*m2 - b1*b2]].

    Without ``rng`` the [[a1*a2]] term is encrypted deterministically; callers
    that forward the result must re-randomize it.
    """
    if not (isinstance(c1, LabPair) and isinstance(c2, LabPair)):
        raise DepthExceeded("LabHE supports a single multiplication level")
    _same_key(c1, c2)
    pk = c1.public_key
    nsq = pk.nsquare
    prod = c1.a * c2.a % pk.N
    head = paillier.encrypt(pk, prod, rng) if rng is not None else pk.trivial(prod)
    v = head.value * gmpy2.powmod(c2.beta.value, c1.a, nsq) % nsq
    v = v * gmpy2.powmod(c1.beta.value, c2.a, nsq) % nsq
    return LabCollapsed(AHECiphertext(pk, int(v)), _prov(c1, c2))


def eval_dot(row: list[LabPair], vec: list[LabPair]) -> LabCollapsed:
    """Sum of Mlt over matching entries, with one plaintext accumulation."""
    if len(row) != len(vec) or not row:
        raise ValueError("dot product needs equal, non-empty lengths")
    pk = row[0].public_key
    N, nsq = pk.N, pk.nsquare
    acc_plain = 0
    acc = gmpy2.mpz(1)
    for c1, c2 in zip(row, vec):
        if not (isinstance(c1, LabPair) and isinstance(c2, LabPair)):
            raise DepthExceeded("LabHE supports a single multiplication level")
        _same_key(c1, c2)
        acc_plain += c1.a * c2.a
        acc = acc * gmpy2.powmod(c2.beta.value, c1.a, nsq) % nsq
        acc = acc * gmpy2.powmod(c1.beta.value, c2.a, nsq) % nsq
    acc = acc * pk.trivial(acc_plain % N).value % nsq
    return LabCollapsed(AHECiphertext(pk, int(acc)), _prov(*row, *vec))


def to_ahe(c: LabCiphertext, rng: Rng | None = None) -> AHECiphertext:
    """Strip the pair structure: [[a]] (+) beta (or alpha as is)."""
    if isinstance(c, LabCollapsed):
        return c.alpha
    pk = c.public_key
    head = paillier.encrypt(pk, c.a, rng) if rng is not None else pk.trivial(c.a)
    return head + c.beta


# -- programs ----------------------------------------------------------------


class Poly:
    """Polynomial of degree <= 2 over labeled inputs, coefficients in Z_N.

    Monomials are sorted tuples of labels: () constant, (x,) linear, (x, y)
    quadratic.
    """

    __slots__ = ("N", "terms")

    def __init__(self, N: int, terms: Mapping[tuple, int] | None = None):
        self.N = N
        self.terms: dict[tuple, int] = {}
        for mono, coef in (terms or {}).items():
            coef %= N
            if coef:
                self.terms[tuple(sorted(mono))] = coef

    @classmethod
    def var(cls, N: int, label: Label) -> Poly:
        return cls(N, {(label,): 1})

    @classmethod
    def const(cls, N: int, c: int) -> Poly:
        return cls(N, {(): c})

    @property
    def degree(self) -> int:
        return max((len(m) for m in self.terms), default=0)

    @property
    def labels(self) -> frozenset:
        return frozenset(x for m in self.terms for x in m)

    def _lift(self, other) -> Poly:
        return other if isinstance(other, Poly) else Poly.const(self.N, other)

    def __add__(self, other) -> Poly:
        other = self._lift(other)
        out = dict(self.terms)
        for m, c in other.terms.items():
            out[m] = out.get(m, 0) + c
        return Poly(self.N, out)

    __radd__ = __add__

    def __neg__(self) -> Poly:
        return Poly(self.N, {m: -c for m, c in self.terms.items()})

    def __sub__(self, other) -> Poly:
        return self + (-self._lift(other))

    def __rsub__(self, other) -> Poly:
        return self._lift(other) - self

    def __mul__(self, other) -> Poly:
        if not isinstance(other, Poly):
            return Poly(self.N, {m: c * other for m, c in self.terms.items()})
        if self.degree + other.degree > 2:
            raise DepthExceeded("admissible functions have degree <= 2")
        out: dict[tuple, int] = {}
        for m1, c1 in self.terms.items():
            for m2, c2 in other.terms.items():
                m = tuple(sorted(m1 + m2))
                out[m] = out.get(m, 0) + c1 * c2
        return Poly(self.N, out)

    __rmul__ = __mul__

    def part(self, degree: int) -> Poly:
        return Poly(self.N, {m: c for m, c in self.terms.items() if len(m) == degree})

    def evaluate(self, values: Mapping[Label, int]) -> int:
        acc = 0
        for m, c in self.terms.items():
            v = c
            for x in m:
                v *= values[x]
            acc += v
        return acc % self.N

    def __repr__(self) -> str:
        return f"Poly({len(self.terms)} terms, degree {self.degree})"


@dataclass(frozen=True)
class LabeledProgram:
    f: Poly

    @property
    def labels(self) -> tuple[Label, ...]:
        return tuple(sorted(self.f.labels))

    @classmethod
    def identity(cls, N: int, label: Label) -> LabeledProgram:
        return cls(Poly.var(N, label))

    @classmethod
    def compose(cls, g, *programs: LabeledProgram) -> LabeledProgram:
        """Evaluate ``g`` (a callable on Polys) on the programs' functions."""
        return cls(g(*(p.f for p in programs)))


@dataclass(frozen=True, eq=False)
class ProgramSecret:
    """Offline-decryption output: the program's secrets split by degree."""

    msk: AhePrivateKey = field(repr=False)
    labels: frozenset
    linear: int
    quadratic: int
    has_quadratic: bool

    @property
    def b(self) -> int:
        return (self.linear + self.quadratic) % self.msk.public_key.N


def decrypt_offline(msk: AhePrivateKey, usks: Mapping[str, bytes], program: LabeledProgram) -> ProgramSecret:
    N = msk.public_key.N
    secrets_ = {}
    for lab in program.labels:
        if lab.party not in usks:
            raise LabelMismatch(f"no user key for label owner {lab.party!r}")
        secrets_[lab] = prf(usks[lab.party], lab, N)
    quad = program.f.part(2)
    return ProgramSecret(
        msk,
        program.f.labels,
        program.f.part(1).evaluate(secrets_),
        quad.evaluate(secrets_),
        bool(quad.terms),
    )


def decrypt_online(ps: ProgramSecret, c: LabCiphertext, path: str = "ii") -> int:
    """Recover m. Pairs: (i) a + f(b) or (ii) a + D(beta) (+ quadratic secret)."""
    if c.provenance is not None and not ps.labels <= c.provenance:
        missing = sorted(ps.labels - c.provenance)
        raise LabelMismatch(f"program labels not in ciphertext provenance: {missing[:3]}")
    if c.public_key.fingerprint != ps.msk.public_key.fingerprint:
        raise KeyMismatch("ciphertext not under this master key")
    N = ps.msk.public_key.N
    if isinstance(c, LabCollapsed):
        return (paillier.decrypt(ps.msk, c.alpha) + ps.quadratic) % N
    if path == "i":
        if ps.has_quadratic:
            raise ValueError("path (i) needs a program without quadratic terms")
        return (c.a + ps.linear) % N
    return (c.a + paillier.decrypt(ps.msk, c.beta) + ps.quadratic) % N


# -- wire form ---------------------------------------------------------------


def to_bytes(c: LabCiphertext) -> bytes:
    if isinstance(c, LabPair):
        return bytes([TAG_PAIR]) + encode_int(c.a) + c.beta.to_bytes()
    return bytes([TAG_COLLAPSED]) + c.alpha.to_bytes()


def from_bytes(buf, keyring, offset: int = 0) -> tuple[LabCiphertext, int]:
    if offset >= len(buf):
        raise DecodeError("truncated LabHE ciphertext")
    tag = buf[offset]
    if tag == TAG_PAIR:
        a, off = decode_int(buf, offset + 1)
        beta, off = AHECiphertext.from_bytes(buf, keyring, off)
        return LabPair(a, beta), off
    if tag == TAG_COLLAPSED:
        alpha, off = AHECiphertext.from_bytes(buf, keyring, offset + 1)
        return LabCollapsed(alpha), off
    raise DecodeError(f"unknown LabHE variant tag {tag:#x}")


def secrets_for(usk: bytes, labels: Iterable[Label], N: int) -> dict[Label, int]:
    return {lab: prf(usk, lab, N) for lab in labels}
