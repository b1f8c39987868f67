"""Acceptance gate: one test per criterion, each printed as a PASS/FAIL line.

Criteria 7-10 share one full closed-loop run of the bundled double
integrator configuration.
"""
import time

import numpy as np
import pytest

from cipherloop import labhe, paillier
from cipherloop.compare import dgk_compare_encrypted, dgk_compare_plain
from cipherloop.config import bundled, load_config
from cipherloop.crypto_core import Rng
from cipherloop.engine.parties import ACTUATOR
from cipherloop.engine.runner import expected_label_counts, fixed_oracle, float_reference, run_closed_loop
from cipherloop.engine.transport import audit
from cipherloop.labhe import Label, LabeledProgram, Poly
from cipherloop.ot import ot_choose, ot_prime
from cipherloop.qp import SystemModel, condense, mpc_objective


def check(report, criterion, ok, detail):
    report(criterion, bool(ok), detail)
    assert ok, f"{criterion}: {detail}"


def test_criterion_1_paillier_homomorphism(acceptance_report, ahe_keys):
    start = time.perf_counter()
    failures = 0
    pk35, sk35 = paillier.keypair_from_primes(5, 7)
    rng = Rng(101)
    enc35 = [paillier.encrypt(pk35, m, rng) for m in range(35)]
    for a in range(35):
        for b in range(35):
            failures += paillier.decrypt(sk35, enc35[a] + enc35[b]) != (a + b) % 35
            failures += paillier.decrypt(sk35, paillier.cmlt(b, enc35[a])) != a * b % 35
    pk, sk = ahe_keys
    for _ in range(1000):
        a, b, k = rng.below(pk.N), rng.below(pk.N), rng.below(pk.N)
        ca = paillier.encrypt(pk, a, rng)
        failures += paillier.decrypt(sk, ca + paillier.encrypt(pk, b, rng)) != (a + b) % pk.N
        failures += paillier.decrypt(sk, paillier.cmlt(k, ca)) != k * a % pk.N
    elapsed = time.perf_counter() - start
    check(acceptance_report, "1 Paillier homomorphism", failures == 0 and elapsed < 30,
          f"{failures} failures over 35^2 x 2 toy + 1000 x 2 512-bit checks, {elapsed:.1f} s (limit 30 s)")


def test_criterion_2_dgk_comparison_exhaustive(acceptance_report, tiny_dgk):
    start = time.perf_counter()
    rng = Rng(102)
    total = wrong = 0
    for l in range(1, 7):
        pairs = [(a, b) for a in range(1 << l) for b in range(1 << l)]
        da, db = dgk_compare_plain([a for a, _ in pairs], [b for _, b in pairs], l, tiny_dgk[1], rng)
        wrong += sum((x ^ y) != (a <= b) for x, y, (a, b) in zip(da, db, pairs))
        total += len(pairs)
    elapsed = time.perf_counter() - start
    check(acceptance_report, "2 DGK comparison (l <= 6, exhaustive)", wrong == 0 and elapsed < 120,
          f"{total - wrong}/{total} correct, {elapsed:.1f} s (limit 120 s)")


def test_criterion_3_encrypted_comparison(acceptance_report, ahe_keys, dgk_keys):
    pk, sk = ahe_keys
    rng = Rng(103)
    pairs = [(rng.below(1 << 16) - (1 << 15), rng.below(1 << 16) - (1 << 15)) for _ in range(500)]
    pairs[:3] = [(0, 0), (-(1 << 15), (1 << 15) - 1), ((1 << 15) - 1, -(1 << 15))]
    a_cts = [pk.encrypt_signed(a, rng) for a, _ in pairs]
    b_cts = [pk.encrypt_signed(b, rng) for _, b in pairs]
    deltas, enc = dgk_compare_encrypted(a_cts, b_cts, sk, dgk_keys[1], 16, 40, rng)
    correct = sum(d == (a <= b) for d, (a, b) in zip(deltas, pairs))
    consistent = all(paillier.decrypt(sk, c) == d for c, d in zip(enc, deltas))
    check(acceptance_report, "3 Encrypted comparison (500 signed 16-bit pairs)", correct == 500 and consistent,
          f"{correct}/500 correct, A's [[delta]] consistent: {consistent}")


def test_criterion_4_ot(acceptance_report, ahe_keys):
    pk, sk = ahe_keys
    rng = Rng(104)
    sig = [(rng.below(pk.N), rng.below(pk.N)) for _ in range(1000)]
    s0 = [paillier.encrypt(pk, a, rng) for a, _ in sig]
    s1 = [paillier.encrypt(pk, b, rng) for _, b in sig]
    ok_ot = ok_prime = fresh = 0
    for i in (0, 1):
        bits = [i] * len(sig)
        got = ot_choose(s0, s1, bits, sk, rng)
        ok_ot += sum(g == p[i] for g, p in zip(got, sig))
        out = ot_prime(s0, s1, bits, pk, rng)
        ok_prime += sum(paillier.decrypt(sk, c) == p[i] for c, p in zip(out, sig))
        fresh += sum(c.value not in (a.value, b.value) for c, a, b in zip(out, s0, s1))
    check(acceptance_report, "4 OT and OT'", ok_ot == ok_prime == fresh == 2000,
          f"OT {ok_ot}/2000, OT' {ok_prime}/2000, fresh OT' ciphertexts {fresh}/2000")


def test_criterion_5_labhe_degree_two(acceptance_report, ahe_keys):
    pk, sk = ahe_keys
    N = pk.N
    rng = Rng(105)
    owners = ("alice", "bob", "carol")
    users = {o: labhe.keygen(pk, o, rng) for o in owners}
    usks = {o: labhe.recover_usk(sk, u.upk) for o, u in users.items()}
    wrong = mixed = 0
    for trial in range(1000):
        n = 1 + rng.below(8)
        labels = [Label(owners[rng.below(3)], "v", trial, i) for i in range(n)]
        vals = [rng.below(N) for _ in range(n)]
        cts = [labhe.encrypt(pk, users[l_.party], l_, v, rng) for l_, v in zip(labels, vals)]
        const = rng.below(N)
        lin = [rng.below(N) if rng.bit() else 0 for _ in range(n)]
        quad = [(rng.below(n), rng.below(n), rng.below(N)) for _ in range(rng.below(5))]
        f = Poly.const(N, const)
        acc = labhe.constant(pk, const)
        for c, l_, ct in zip(lin, labels, cts):
            if c:
                f = f + c * Poly.var(N, l_)
                acc = labhe.eval_add(acc, labhe.eval_cmlt(c, ct))
        for i, j, c in quad:
            f = f + c * (Poly.var(N, labels[i]) * Poly.var(N, labels[j]))
            term = labhe.eval_cmlt(c, labhe.eval_mlt(cts[i], cts[j], rng))
            acc = labhe.eval_add(term, acc) if rng.bit() else labhe.eval_add(acc, term)
            mixed += 1
        # oracle: plain modular evaluation of the drawn coefficients
        want = (const + sum(c * v for c, v in zip(lin, vals)) + sum(c * vals[i] * vals[j] for i, j, c in quad)) % N
        ps = labhe.decrypt_offline(sk, usks, LabeledProgram(f))
        wrong += labhe.decrypt_online(ps, acc) != want
    check(acceptance_report, "5 LabHE degree-2 evaluation", wrong == 0,
          f"{1000 - wrong}/1000 polynomials exact, {mixed} mixed Pair/Collapsed additions")


def test_criterion_6_condensation_oracle(acceptance_report):
    """Relative error |(J(U) - J(0)) - (1/2 U'HU + U'F'x)| / (|J(U)| + |J(0)|)."""
    gen = np.random.default_rng(106)
    worst, trials = 0.0, 0
    while trials < 1000:
        n, m, horizon = (int(v) for v in gen.integers(1, [5, 5, 7]))
        A = gen.normal(size=(n, n))
        A *= gen.uniform(0.1, 0.95) / np.abs(np.linalg.eigvals(A)).max()
        spd = lambda k: (lambda M: M @ M.T + 0.1 * np.eye(k))(gen.normal(size=(k, k)))  # noqa: E731
        model = SystemModel(A, gen.normal(size=(n, m)), spd(n), spd(n), spd(m))
        qp = condense(model, horizon)
        for _ in range(10):
            x, U = gen.normal(size=n), gen.normal(size=horizon * m)
            jU, j0 = mpc_objective(model, x, U), mpc_objective(model, x, np.zeros_like(U))
            cond = 0.5 * U @ qp.H @ U + U @ qp.F.T @ x
            worst = max(worst, abs((jU - j0) - cond) / (abs(jU) + abs(j0)))
            trials += 1
    check(acceptance_report, "6 Condensation oracle", worst < 1e-10,
          f"max relative error {worst:.2e} over {trials} random (x, U) (limit 1e-10)")


@pytest.fixture(scope="module")
def full_run():
    cfg = load_config(bundled("double_integrator"))
    start = time.perf_counter()
    res = run_closed_loop(cfg, keep_session=True)
    return cfg, res, time.perf_counter() - start


def test_criterion_7_bit_exact(acceptance_report, full_run):
    cfg, res, elapsed = full_run
    fixed = fixed_oracle(cfg, res.xs, res.u0)
    mismatches = sum(a != b for u, v in zip(res.us_int, fixed) for a, b in zip(u, v))
    _, float_us = float_reference(cfg, res.u0[0])
    dev = float(np.abs(res.us - float_us).max())
    ok = mismatches == 0 and dev <= 2**-10 and elapsed <= 300
    check(acceptance_report, "7 Bit-exact end-to-end", ok,
          f"{mismatches} mismatches vs fixed-point FGM over T={cfg.steps}; max float deviation {dev:.2e} "
          f"(limit {2**-10:.2e}); {elapsed:.0f} s (target 300 s)")


def test_criterion_8_closed_loop(acceptance_report, full_run):
    _, res, _ = full_run
    x0, xT = np.linalg.norm(res.xs[0]), np.linalg.norm(res.xs[-1])
    check(acceptance_report, "8 Closed-loop behavior", xT <= 0.1 * x0, f"|x(T)| = {xT:.3e}, |x(0)| = {x0:.3g}")


def test_criterion_9_taint_audit(acceptance_report, full_run):
    cfg, res, _ = full_run
    violations = audit(res.trace, cfg.fp.lambda_stat, final_k=cfg.iterations)
    check(acceptance_report, "9 Structural confidentiality", not violations,
          f"{len(violations)} violations over {res.trace.frames} frames" + (f"; first: {violations[0]}"
                                                                            if violations else ""))


def test_criterion_10_label_hygiene(acceptance_report, full_run):
    cfg, res, _ = full_run
    expected = expected_label_counts(cfg)
    actuator = res.session.actuator
    d = cfg.size
    # one program secret per iterate coordinate and (t, k), each consumed exactly once
    n_secrets = cfg.steps * cfg.iterations * d
    secrets_ok = (actuator.secrets_prepared == actuator.secrets_consumed == n_secrets
                  and not actuator.rho and not actuator._offline)
    # the registry raises on any (usk, label) reuse, so its size equals the number of encryptions
    unique = len(res.registry) == sum(res.registry.counts.values())
    ok = res.registry.counts == expected and secrets_ok and unique
    check(acceptance_report, "10 Label hygiene", ok,
          f"labels {dict(res.registry.counts)} vs expected {dict(expected)}; "
          f"{ACTUATOR} program secrets prepared {actuator.secrets_prepared}, consumed "
          f"{actuator.secrets_consumed}, expected {n_secrets}; no reuse: {unique}")
