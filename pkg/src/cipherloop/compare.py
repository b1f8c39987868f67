"""Private two-party comparison with DGK bit encryptions.

``bit_compare_*`` compare plaintext l-bit inputs held by A (alpha) and B
(beta, owner of the DGK secret key); afterwards delta_A xor delta_B equals
(alpha <= beta). ``enc_compare_*`` compare two AHE ciphertexts held by A; B
learns delta = (a <= b) and A keeps [[delta]].

Each role is a generator yielding transport effects, vectorized over
independent coordinates that share one message per round. Bits are handled
MSB first; the XOR prefix of position i runs over the strictly more
significant positions.
"""
from __future__ import annotations

from . import paillier
from .crypto_core import Rng
from .dgk import DgkPrivateKey, DgkPublicKey, DGKCiphertext, dgk_cmlt, dgk_encrypt, dgk_rerandomize, is_zero
from .engine.messages import MsgType, PartyIO, Taint
from .errors import BitWidthMismatch, BlindingOverflow
from .paillier import AHECiphertext, AhePrivateKey, AhePublicKey

# phase offsets inside one comparison round
OFF_Z, OFF_BITS, OFF_MASKED, OFF_CARRY, OFF_RESULT = 0, 1, 2, 3, 4


def to_bits(x: int, l: int) -> list[int]:
    if not 0 <= x < 1 << l:
        raise BitWidthMismatch(f"{x} does not fit in {l} bits")
    return [(x >> (l - 1 - i)) & 1 for i in range(l)]


def _mask(pk: DgkPublicKey, rng: Rng) -> int:
    """Nonzero multiplier mod u of exactly 2 * t_param bits."""
    width = 2 * pk.t_param
    while True:
        r = rng.bits(width - 1) | (1 << (width - 1))
        if r % pk.u:
            return r


def _masked_values(pk: DgkPublicKey, alpha: int, enc_bits: list[DGKCiphertext], delta_a: int,
                   rng: Rng) -> list[DGKCiphertext]:
    """The l + 1 values whose zero/nonzero pattern B inspects.

    For positions with alpha_i = delta_A:
      delta_A = 0: c_i = 1 - beta_i + sum_{j<i} (alpha_j xor beta_j)   zero iff alpha < beta decided at i
      delta_A = 1: c_i = beta_i + sum_{j<i} (alpha_j xor beta_j)       zero iff alpha > beta decided at i
    Other positions carry a random nonzero plaintext. One more value,
    delta_A + sum_j (alpha_j xor beta_j), is zero iff delta_A = 0 and alpha = beta,
    which the positional values cannot detect.
    """
    l = len(enc_bits)
    n = pk.n
    one = DGKCiphertext(pk, pk.g)
    alpha_bits = to_bits(alpha, l)
    prefix = DGKCiphertext(pk, 1)
    out = []
    for i, (a_i, b_i) in enumerate(zip(alpha_bits, enc_bits)):
        x_i = one - b_i if a_i else b_i
        if a_i == delta_a:
            c = (one + prefix - b_i) if delta_a == 0 else (prefix + b_i)
            c = dgk_cmlt(_mask(pk, rng), c)
        else:
            c = dgk_encrypt(pk, _mask(pk, rng) % pk.u, rng)
        out.append(c)
        prefix = DGKCiphertext(pk, prefix.value * x_i.value % n)
    eq = DGKCiphertext(pk, prefix.value * (pk.g if delta_a else 1) % n)
    out.append(dgk_cmlt(_mask(pk, rng), eq))
    out = [dgk_rerandomize(c, rng) for c in out]
    rng.shuffle(out)
    return out


def bit_compare_a(io: PartyIO, peer: str, alphas: list[int], l: int, pk: DgkPublicKey, rng: Rng,
                phase: int):
    """A's side: receives [beta_i], returns the list of delta_A bits."""
    for a in alphas:
        to_bits(a, l)
    msg = yield io.recv(peer, MsgType.DGK_BITS, phase + OFF_BITS)
    rows = msg.payload
    if len(rows) != len(alphas) or any(len(r) != l for r in rows):
        raise BitWidthMismatch(f"expected {len(alphas)} x {l} encrypted bits")
    deltas, masked = [], []
    for alpha, enc_bits in zip(alphas, rows):
        d = rng.bit()
        deltas.append(d)
        masked.append(_masked_values(pk, alpha, enc_bits, d, rng))
    yield io.send(peer, MsgType.DGK_MASKED, masked, phase + OFF_MASKED, Taint.BIT)
    return deltas


def bit_compare_b(io: PartyIO, peer: str, betas: list[int], l: int, sk: DgkPrivateKey, rng: Rng,
                phase: int):
    """B's side: sends its encrypted bits, returns the list of delta_B bits."""
    pk = sk.public_key
    if 1 << l >= pk.u:
        raise BitWidthMismatch(f"DGK plaintext space too small for {l}-bit prefix sums")
    rows = [[dgk_encrypt(pk, b, rng) for b in to_bits(beta, l)] for beta in betas]
    yield io.send(peer, MsgType.DGK_BITS, rows, phase + OFF_BITS)
    msg = yield io.recv(peer, MsgType.DGK_MASKED, phase + OFF_MASKED)
    if len(msg.payload) != len(betas):
        raise BitWidthMismatch("masked value count does not match")
    return [int(any(is_zero(sk, c) for c in cs)) for cs in msg.payload]


def less_than_from_bits(pk: AhePublicKey, delta_a: int, enc_delta_b: AHECiphertext) -> AHECiphertext:
    """[[beta < alpha]] = [[delta_B]] if delta_A = 1, else [[1 - delta_B]]."""
    return enc_delta_b if delta_a else pk.trivial(1) - enc_delta_b


def check_blinding_budget(l: int, lambda_stat: int, N: int) -> None:
    # z = b - a + 2^l + r < 2^(l+1) + 2^(l+1+lambda) must not wrap mod N
    if l + lambda_stat + 3 > N.bit_length():
        raise BlindingOverflow(f"l + 1 + lambda = {l + 1 + lambda_stat} bits do not fit below N")


def enc_compare_a(io: PartyIO, peer: str, a_cts: list[AHECiphertext], b_cts: list[AHECiphertext], l: int,
                lambda_stat: int, dgk_pk: DgkPublicKey, rng: Rng, phase: int):
    """A's side: holds [[a]], [[b]]; returns the [[delta]] ciphertexts it sent to B."""
    if len(a_cts) != len(b_cts):
        raise ValueError("comparison inputs differ in length")
    if not a_cts:
        return []
    pk = a_cts[0].public_key
    check_blinding_budget(l, lambda_stat, pk.N)
    rs = [rng.bits(l + 1 + lambda_stat) for _ in a_cts]
    zs = [b - a + paillier.encrypt(pk, (1 << l) + r, rng) for a, b, r in zip(a_cts, b_cts, rs)]
    yield io.send(peer, MsgType.CMP_Z, zs, phase + OFF_Z, Taint.BLINDED, lambda_stat)
    alphas = [r & ((1 << l) - 1) for r in rs]
    deltas_a = yield from bit_compare_a(io, peer, alphas, l, dgk_pk, rng, phase)
    msg = yield io.recv(peer, MsgType.CMP_CARRY, phase + OFF_CARRY)
    z_hi, enc_db = msg.payload
    out = []
    for da, zh, db, r in zip(deltas_a, z_hi, enc_db, rs):
        lt = less_than_from_bits(pk, da, db)
        out.append(zh - paillier.encrypt(pk, r >> l, rng) - lt)
    yield io.send(peer, MsgType.CMP_RESULT, out, phase + OFF_RESULT, Taint.BIT)
    return out


def enc_compare_b(io: PartyIO, peer: str, sk: AhePrivateKey, dgk_sk: DgkPrivateKey, l: int, rng: Rng,
                phase: int):
    """B's side: returns delta = (a <= b) per coordinate."""
    msg = yield io.recv(peer, MsgType.CMP_Z, phase + OFF_Z)
    zs = [paillier.decrypt(sk, c) for c in msg.payload]
    betas = [z & ((1 << l) - 1) for z in zs]
    deltas_b = yield from bit_compare_b(io, peer, betas, l, dgk_sk, rng, phase)
    pk = sk.public_key
    carry = [[paillier.encrypt(pk, z >> l, rng) for z in zs], [paillier.encrypt(pk, d, rng) for d in deltas_b]]
    yield io.send(peer, MsgType.CMP_CARRY, carry, phase + OFF_CARRY)
    msg = yield io.recv(peer, MsgType.CMP_RESULT, phase + OFF_RESULT)
    deltas = [paillier.decrypt(sk, c) for c in msg.payload]
    if any(d not in (0, 1) for d in deltas):
        raise BlindingOverflow("comparison result is not a bit; inputs exceed the declared width")
    return deltas


# -- local two-party runs ----------------------------------------------------


def _run_pair(prog_a, prog_b, public_keys, trace=None):
    from .engine.transport import InProcTransport

    res = InProcTransport(trace, public_keys).run({"A": prog_a, "B": prog_b})
    return res["A"], res["B"]


def dgk_compare_plain(alpha, beta, l: int, dgk_sk: DgkPrivateKey, rng: Rng, trace=None):
    """Run the bitwise comparison in-process. Scalars or equal-length lists; returns (delta_A, delta_B)."""
    from .engine.messages import Phase

    scalar = isinstance(alpha, int)
    alphas, betas = ([alpha], [beta]) if scalar else (list(alpha), list(beta))
    if len(alphas) != len(betas):
        raise ValueError("inputs differ in length")
    ra, rb = rng.split(), rng.split()
    base = Phase.STANDALONE
    da, db = _run_pair(
        bit_compare_a(PartyIO("A"), "B", alphas, l, dgk_sk.public_key, ra, base),
        bit_compare_b(PartyIO("B"), "A", betas, l, dgk_sk, rb, base),
        [dgk_sk.public_key],
        trace,
    )
    return (da[0], db[0]) if scalar else (da, db)


def dgk_compare_encrypted(a_cts, b_cts, sk: AhePrivateKey, dgk_sk: DgkPrivateKey, l: int, lambda_stat: int,
                          rng: Rng, trace=None):
    """Run the ciphertext comparison in-process. Returns (delta list to B, [[delta]] list kept by A)."""
    from .engine.messages import Phase

    scalar = isinstance(a_cts, AHECiphertext)
    a_list, b_list = ([a_cts], [b_cts]) if scalar else (list(a_cts), list(b_cts))
    ra, rb = rng.split(), rng.split()
    base = Phase.STANDALONE
    enc_d, d = _run_pair(
        enc_compare_a(PartyIO("A"), "B", a_list, b_list, l, lambda_stat, dgk_sk.public_key, ra, base),
        enc_compare_b(PartyIO("B"), "A", sk, dgk_sk, l, rb, base),
        [sk.public_key, dgk_sk.public_key],
        trace,
    )
    return (d[0], enc_d[0]) if scalar else (d, enc_d)
