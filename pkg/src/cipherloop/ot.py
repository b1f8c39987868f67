"""1-out-of-2 oblivious transfer over Paillier ciphertexts.

Party A (sender) holds [[sigma_0]], [[sigma_1]]; party B (chooser) holds a
bit i and the decryption key.

* OT delivers the plaintext sigma_i to B.
* OT' delivers a fresh [[sigma_i]] to A, who does not learn i.

Roles are generators yielding transport effects, vectorized over
coordinates; ``ot_choose`` and ``ot_prime`` run both roles in-process.
"""
from __future__ import annotations

from . import paillier
from .crypto_core import Rng, sample_below
from .engine.messages import MsgType, PartyIO, Taint
from .paillier import AHECiphertext, AhePrivateKey, AhePublicKey

# phase offsets relative to the enclosing comparison round
OFF_PRIME_MASKED, OFF_PRIME_REPLY = 5, 6
OFF_MASKED, OFF_SELECT, OFF_MASK = 7, 8, 9


def _check_bits(bits: list[int]) -> None:
    if any(i not in (0, 1) for i in bits):
        raise ValueError("selector must be a bit")


def _mask_pair(pk: AhePublicKey, s0: list[AHECiphertext], s1: list[AHECiphertext], rng: Rng):
    if len(s0) != len(s1):
        raise ValueError("sigma vectors differ in length")
    r0 = [sample_below(pk.N, rng) for _ in s0]
    r1 = [sample_below(pk.N, rng) for _ in s0]
    v0 = [c + paillier.encrypt(pk, r, rng) for c, r in zip(s0, r0)]
    v1 = [c + paillier.encrypt(pk, r, rng) for c, r in zip(s1, r1)]
    return r0, r1, v0, v1


def ot_prime_sender(io: PartyIO, peer: str, s0: list[AHECiphertext], s1: list[AHECiphertext], rng: Rng,
                    phase: int):
    """Returns fresh [[sigma_i]] per coordinate."""
    if not s0:
        return []
    pk = s0[0].public_key
    r0, r1, v0, v1 = _mask_pair(pk, s0, s1, rng)
    yield io.send(peer, MsgType.OTP_MASKED, [v0, v1], phase + OFF_PRIME_MASKED, Taint.UNIFORM,
                  pk.N.bit_length() - 1)
    msg = yield io.recv(peer, MsgType.OTP_REPLY, phase + OFF_PRIME_REPLY)
    enc_i, v_i = msg.payload
    minus_one = pk.N - 1
    # [[sigma_i]] = [[v_i]] + r0 * ([[i]] - 1) - r1 * [[i]]
    return [
        v + paillier.cmlt(a, paillier.add_plain(ci, minus_one)) + paillier.cmlt(-b, ci)
        for v, ci, a, b in zip(v_i, enc_i, r0, r1)
    ]


def ot_prime_chooser(io: PartyIO, peer: str, bits: list[int], pk: AhePublicKey, rng: Rng, phase: int):
    _check_bits(bits)
    if not bits:
        return None
    msg = yield io.recv(peer, MsgType.OTP_MASKED, phase + OFF_PRIME_MASKED)
    v0, v1 = msg.payload
    enc_i = [paillier.encrypt(pk, i, rng) for i in bits]
    chosen = [paillier.refresh(pk, b if i else a, rng) for a, b, i in zip(v0, v1, bits)]
    yield io.send(peer, MsgType.OTP_REPLY, [enc_i, chosen], phase + OFF_PRIME_REPLY)
    return None


def ot_sender(io: PartyIO, peer: str, s0: list[AHECiphertext], s1: list[AHECiphertext], rng: Rng, phase: int):
    """Plain OT, sender side. Learns nothing; returns None."""
    if not s0:
        return None
    pk = s0[0].public_key
    r0, r1, v0, v1 = _mask_pair(pk, s0, s1, rng)
    nbits = pk.N.bit_length() - 1
    yield io.send(peer, MsgType.OT_MASKED, [v0, v1], phase + OFF_MASKED, Taint.UNIFORM, nbits)
    msg = yield io.recv(peer, MsgType.OT_SELECT, phase + OFF_SELECT)
    # [[r_i]] = [[r0]] + (r1 - r0) * [[i]]
    masks = [paillier.encrypt(pk, a, rng) + paillier.cmlt(b - a, ci) for ci, a, b in zip(msg.payload, r0, r1)]
    yield io.send(peer, MsgType.OT_MASK, masks, phase + OFF_MASK, Taint.UNIFORM, nbits)
    return None


def ot_chooser(io: PartyIO, peer: str, bits: list[int], sk: AhePrivateKey, rng: Rng, phase: int):
    """Plain OT, chooser side. Returns sigma_i per coordinate (residues mod N)."""
    _check_bits(bits)
    if not bits:
        return []
    pk = sk.public_key
    msg = yield io.recv(peer, MsgType.OT_MASKED, phase + OFF_MASKED)
    v0, v1 = msg.payload
    v_i = [paillier.decrypt(sk, b if i else a) for a, b, i in zip(v0, v1, bits)]
    yield io.send(peer, MsgType.OT_SELECT, [paillier.encrypt(pk, i, rng) for i in bits], phase + OFF_SELECT)
    msg = yield io.recv(peer, MsgType.OT_MASK, phase + OFF_MASK)
    return [(v - paillier.decrypt(sk, m)) % pk.N for v, m in zip(v_i, msg.payload)]


# -- local two-party runs ----------------------------------------------------


def _run(prog_a, prog_b, pk, trace):
    from .engine.transport import InProcTransport

    res = InProcTransport(trace, [pk]).run({"A": prog_a, "B": prog_b})
    return res["A"], res["B"]


def _vec(s0, s1, i):
    scalar = isinstance(s0, AHECiphertext)
    if scalar:
        return True, [s0], [s1], [i]
    return False, list(s0), list(s1), list(i)


def ot_choose(s0, s1, i, sk: AhePrivateKey, rng: Rng, trace=None):
    """Plain OT in-process; returns sigma_i (scalar or list) as seen by the chooser."""
    from .engine.messages import Phase

    scalar, s0, s1, bits = _vec(s0, s1, i)
    _, out = _run(
        ot_sender(PartyIO("A"), "B", s0, s1, rng.split(), Phase.STANDALONE),
        ot_chooser(PartyIO("B"), "A", bits, sk, rng.split(), Phase.STANDALONE),
        sk.public_key,
        trace,
    )
    return out[0] if scalar else out


def ot_prime(s0, s1, i, pk: AhePublicKey, rng: Rng, trace=None):
    """OT' in-process; returns the sender's fresh [[sigma_i]] (scalar or list)."""
    from .engine.messages import Phase

    scalar, s0, s1, bits = _vec(s0, s1, i)
    out, _ = _run(
        ot_prime_sender(PartyIO("A"), "B", s0, s1, rng.split(), Phase.STANDALONE),
        ot_prime_chooser(PartyIO("B"), "A", bits, pk, rng.split(), Phase.STANDALONE),
        pk,
        trace,
    )
    return out[0] if scalar else out
