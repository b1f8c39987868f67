"""Closed-loop driver: builds the parties, runs initialization and MPC steps."""
from __future__ import annotations

import logging
import time
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from .. import labhe
from ..config import RunConfig
from ..crypto_core import Rng
from ..dgk import DgkPrivateKey
from ..fixedpoint import FpParams, to_signed
from ..labhe import LabCollapsed, LabelRegistry, ProgramSecret
from ..paillier import AhePrivateKey
from ..qp import closed_loop_float, condense, fgm_solve_fixed, fixed_qp, plant_step, quantize_vec, warm_start
from .messages import PartyIO, Phase
from .parties import (
    ACTUATOR,
    CLOUD,
    SETUP,
    ActuatorParty,
    CloudParty,
    SetupParty,
    SubsystemParty,
    subsystem_name,
    truncate_actuator,
    truncate_cloud,
)
from .transport import InProcTransport, TcpTransport, Trace

log = logging.getLogger(__name__)


class Session:
    """All parties of one deployment plus the transport connecting them."""

    def __init__(self, cfg: RunConfig, transport: str | None = None):
        self.cfg = cfg
        self.rng = Rng(cfg.seed)
        self.registry = LabelRegistry()
        self.trace = Trace()
        self.setup = SetupParty(cfg, self.rng.split(), self.registry)
        self.subsystems = [SubsystemParty(i, cfg, self.rng.split(), self.registry) for i in range(len(cfg.n_parts))]
        self.cloud = CloudParty(cfg, self.rng.split())
        self.actuator = ActuatorParty(cfg, self.rng.split(), self.registry)
        mode = transport or cfg.transport
        if mode == "tcp":
            self.transport = TcpTransport(self.names, self.trace)
        else:
            self.transport = InProcTransport(self.trace)
        self._ios = {name: PartyIO(name) for name in self.names}

    @property
    def names(self) -> list[str]:
        return [SETUP] + [s.name for s in self.subsystems] + [CLOUD, ACTUATOR]

    def _parties(self):
        return [self.setup, *self.subsystems, self.cloud, self.actuator]

    def initialize(self) -> None:
        self.transport.run({p.name: p.initialize(self._ios[p.name]) for p in self._parties()})

    def step(self, t: int, x) -> list[int]:
        """Run one encrypted MPC step for state x; returns u(t) as signed fixed-point integers."""
        off = 0
        for s in self.subsystems:
            s.measure(x[off : off + s.n_i])
            off += s.n_i
        programs = {s.name: s.step(self._ios[s.name], t) for s in self.subsystems}
        programs[CLOUD] = self.cloud.step(self._ios[CLOUD], t)
        programs[ACTUATOR] = self.actuator.step(self._ios[ACTUATOR], t)
        return self.transport.run(programs)[ACTUATOR]

    def initial_iterate(self, t: int) -> list[int] | None:
        """Test access: U_0 = actuator share + cloud share for a cold-started step."""
        a = self.actuator.u0_share_history.get(t)
        c = self.cloud.r0_history.get(t)
        if a is None or c is None:
            return None
        return [x + y for x, y in zip(a, c)]

    def close(self) -> None:
        if isinstance(self.transport, TcpTransport):
            self.transport.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


@dataclass
class RunResult:
    cfg: RunConfig
    xs: np.ndarray
    us_int: list[list[int]]
    u0: dict[int, list[int]]
    trace: Trace
    registry: LabelRegistry
    step_seconds: list[float] = field(default_factory=list)
    session: Session | None = None

    @property
    def us(self) -> np.ndarray:
        return np.array([[v / self.cfg.fp.scale for v in u] for u in self.us_int])


def run_initialization(cfg: RunConfig, transport: str | None = None) -> Session:
    cfg.validate()
    session = Session(cfg, transport)
    session.initialize()
    return session


def run_mpc_step(session: Session, t: int, x) -> list[int]:
    return session.step(t, x)


def run_closed_loop(cfg: RunConfig, transport: str | None = None, keep_session: bool = False) -> RunResult:
    session = run_initialization(cfg, transport)
    try:
        x = np.asarray(cfg.spec.x0, dtype=float)
        xs, us, secs = [x], [], []
        for t in range(cfg.steps):
            t0 = time.perf_counter()
            u_int = session.step(t, x)
            secs.append(time.perf_counter() - t0)
            u = np.array([v / cfg.fp.scale for v in u_int])
            x = plant_step(cfg.model, x, u)
            xs.append(x)
            us.append(u_int)
            log.info("step %d: u=%s |x|=%.3g (%.2fs)", t, u, np.linalg.norm(x), secs[-1])
        u0 = {t: session.initial_iterate(t) for t in range(cfg.steps) if session.initial_iterate(t) is not None}
        return RunResult(cfg, np.array(xs), us, u0, session.trace, session.registry, secs,
                         session if keep_session else None)
    finally:
        if not keep_session:
            session.close()


# -- accounting and oracles --------------------------------------------------


def expected_label_counts(cfg: RunConfig) -> Counter:
    """Labels each owner must consume over initialization and T steps."""
    d, n = cfg.size, cfg.model.n
    counts = Counter({SETUP: 2 * d * d + d * n + 1, ACTUATOR: cfg.steps * cfg.iterations * d})
    for i, (n_i, m_i) in enumerate(zip(cfg.n_parts, cfg.m_parts)):
        counts[subsystem_name(i)] = 2 * cfg.horizon * m_i + cfg.steps * n_i
    return counts


def fixed_oracle(cfg: RunConfig, xs: np.ndarray, u0: dict[int, list[int]]) -> list[list[int]]:
    """fgm_solve_fixed along the observed states with the same initial iterates."""
    p = cfg.fp
    fq = fixed_qp(condense(cfg.model, cfg.horizon), p)
    box = cfg.spec.box(cfg.horizon)
    lu, hu = quantize_vec(box.l_u, p), quantize_vec(box.h_u, p)
    m = cfg.model.m
    U, out = None, []
    for t in range(cfg.steps):
        if t == 0 or not cfg.warm_start:
            U = u0[t]
        UK = fgm_solve_fixed(fq, (lu, hu), quantize_vec(xs[t], p), cfg.iterations, U, p)
        out.append(UK[:m])
        U = warm_start(UK, m)
    return out


def float_reference(cfg: RunConfig, U0: list[int] | None = None):
    """Float FGM closed loop from the same initial iterate; returns (xs, us)."""
    qp = condense(cfg.model, cfg.horizon)
    box = cfg.spec.box(cfg.horizon)
    start = None if U0 is None else np.array(U0, dtype=float) / cfg.fp.scale
    return closed_loop_float(cfg.model, qp, box, cfg.spec.x0, cfg.steps, cfg.iterations, start, cfg.warm_start)


def interactive_truncate(values: list[int], msk: AhePrivateKey, dgk_sk: DgkPrivateKey, p: FpParams, rng: Rng,
                         trace: Trace | None = None) -> list[int]:
    """Truncate signed scale-2^(2 l_f) integers through the two-party protocol.

    Returns the decrypted results as signed integers (test helper).
    """
    pk = msk.public_key
    cts = [LabCollapsed(pk.encrypt_signed(v, rng)) for v in values]
    zero = [ProgramSecret(msk, frozenset(), 0, 0, False) for _ in values]
    res = InProcTransport(trace, [pk, dgk_sk.public_key]).run({
        CLOUD: truncate_cloud(PartyIO(CLOUD), ACTUATOR, cts, p, dgk_sk.public_key, rng.split(), Phase.TRUNC),
        ACTUATOR: truncate_actuator(PartyIO(ACTUATOR), CLOUD, zero, p, dgk_sk, rng.split(), Phase.TRUNC),
    })
    from .. import paillier

    return [to_signed(paillier.decrypt(msk, c), pk.N) for c in res[CLOUD]]


def decrypt_pair(actuator: ActuatorParty, c) -> int:
    """Test-only: decrypt a fresh LabHE ciphertext with the master key."""
    ps = labhe.decrypt_offline(actuator.masters.msk, actuator.usks, labhe.LabeledProgram(labhe.Poly(actuator.mpk.N)))
    return to_signed(labhe.decrypt_online(ps, c), actuator.mpk.N)
