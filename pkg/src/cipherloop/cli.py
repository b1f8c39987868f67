"""Command line: ``cipherloop run | verify | keygen``.

Exit codes: 0 success, 1 protocol or verification failure, 2 invalid
configuration or model file.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from .config import bundled, load_config
from .crypto_core import Rng
from .errors import CipherloopError, ConfigInvalid

log = logging.getLogger("cipherloop")


def _resolve_config(arg: str | None) -> Path:
    if arg is None:
        return bundled("double_integrator")
    p = Path(arg)
    if p.exists():
        return p
    try:
        return bundled(arg)
    except ConfigInvalid:
        return p  # let the loader report the missing file


def _load(args):
    return load_config(
        _resolve_config(args.config),
        seed=args.seed,
        transport=args.transport,
        out_dir=Path(args.out) if args.out else None,
    )


def write_results(path: Path, cfg, result) -> None:
    m, n = cfg.model.m, cfg.model.n
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t"] + [f"u{j}" for j in range(m)] + [f"x{j}" for j in range(n)])
        for t, u in enumerate(result.us):
            w.writerow([t] + [repr(float(v)) for v in u] + [repr(float(v)) for v in result.xs[t]])


def write_timing(path: Path, result) -> None:
    per_step: dict[int, list[int]] = {}
    for r in result.trace.rows:
        if r.t > 0:
            acc = per_step.setdefault(r.t - 1, [0, 0])
            acc[0] += 1
            acc[1] += r.nbytes
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "wall_clock_s", "frames", "bytes"])
        for t, sec in enumerate(result.step_seconds):
            frames, nbytes = per_step.get(t, (0, 0))
            w.writerow([t, f"{sec:.6f}", frames, nbytes])


def write_trace(path: Path, trace) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "k", "phase", "from", "to", "msg_type", "payload_bytes"])
        for r in trace.rows:
            w.writerow([r.t, r.k, r.phase, r.src, r.dst, r.msg_type, r.nbytes])


def cmd_run(args) -> int:
    from .engine.runner import run_closed_loop

    cfg = _load(args)
    out = cfg.out_dir
    out.mkdir(parents=True, exist_ok=True)
    result = run_closed_loop(cfg)
    write_results(out / "results.csv", cfg, result)
    write_trace(out / "trace.csv", result.trace)
    write_timing(out / "timing.csv", result)
    x0, xT = np.linalg.norm(result.xs[0]), np.linalg.norm(result.xs[-1])
    print(f"{cfg.steps} steps, {result.trace.frames} frames, {result.trace.total_bytes} bytes, "
          f"{sum(result.step_seconds):.1f} s; |x(0)| = {x0:.4g}, |x(T)| = {xT:.4g}")
    print(f"wrote {out / 'results.csv'}, {out / 'trace.csv'}, {out / 'timing.csv'}")
    return 0


def cmd_verify(args) -> int:
    from .engine.runner import fixed_oracle, float_reference, run_closed_loop

    cfg = _load(args)
    result = run_closed_loop(cfg)
    fixed = fixed_oracle(cfg, result.xs, result.u0)
    enc = np.array(result.us_int, dtype=np.int64)
    dev_fixed = int(np.abs(enc - np.array(fixed, dtype=np.int64)).max())
    _, float_us = float_reference(cfg, result.u0.get(0))
    dev_float = float(np.abs(result.us - float_us).max())
    exact = dev_fixed == 0
    print(f"max |u_enc - u_fixed| = {dev_fixed} (units of 2^-{cfg.fp.l_f}) -> {'bit-exact' if exact else 'MISMATCH'}")
    print(f"max |u_enc - u_float| = {dev_float:.3e} (tolerance {cfg.tolerance:.3e}) -> "
          f"{'within' if dev_float <= cfg.tolerance else 'exceeds'} tolerance")
    print(f"|x(T)| / |x(0)| = {np.linalg.norm(result.xs[-1]):.4g} / {np.linalg.norm(result.xs[0]):.4g}")
    return 0 if exact else 1


def cmd_keygen(args) -> int:
    from . import labhe
    from .dgk import dgk_keygen

    rng = Rng(args.seed)
    masters = labhe.init(args.bits, rng)
    dpk, dsk = dgk_keygen(args.dgk_bits, args.t_param, rng)
    doc = {
        "ahe": {"N": hex(masters.mpk.N), "p": hex(masters.msk.p), "q": hex(masters.msk.q)},
        "dgk": {
            "n": hex(dpk.n), "g": hex(dpk.g), "h": hex(dpk.h), "u": hex(dpk.u), "t_param": dpk.t_param,
            "p": hex(dsk.p), "q": hex(dsk.q), "v_p": hex(dsk.v_p), "v_q": hex(dsk.v_q),
        },
    }
    out = Path(args.out or ".")
    out.mkdir(parents=True, exist_ok=True)
    path = out / "keys.json"
    path.write_text(json.dumps(doc, indent=2) + "\n")
    print(f"wrote {path} ({masters.mpk.N.bit_length()}-bit N, {dpk.n.bit_length()}-bit DGK n)")
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="cipherloop", description="Encrypted MPC closed-loop simulator")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="run configuration (TOML path or bundled name)")
        p.add_argument("--seed", type=int, help="override the configured seed")
        p.add_argument("--transport", choices=["inproc", "tcp"], help="override the transport")
        p.add_argument("--out", help="output directory")

    p = sub.add_parser("run", help="run the encrypted closed loop and write CSV files")
    common(p)
    p.set_defaults(func=cmd_run)
    p = sub.add_parser("verify", help="compare the encrypted pipeline with the plaintext solvers")
    common(p)
    p.set_defaults(func=cmd_verify)
    p = sub.add_parser("keygen", help="generate an AHE and a DGK key pair")
    p.add_argument("--bits", type=int, default=512)
    p.add_argument("--dgk-bits", type=int, default=384)
    p.add_argument("--t-param", type=int, default=80)
    p.add_argument("--seed", type=int, help="deterministic keys (testing only)")
    p.add_argument("--out", help="output directory")
    p.set_defaults(func=cmd_keygen)
    return ap


def main(argv: list[str] | None = None) -> int:
    level = os.environ.get("CIPHERLOOP_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigInvalid as exc:
        print(f"cipherloop: configuration error: {exc}", file=sys.stderr)
        return 2
    except CipherloopError as exc:
        print(f"cipherloop: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
