"""Party state machines for initialization and the encrypted MPC step.

Every party exposes ``initialize(io)`` and ``step(io, t)`` generators. The
cloud never holds a decryption key; the actuator holds the master secret
key and the DGK key and only ever sees blinded values, comparison bits and
its own output.
"""
from __future__ import annotations

from dataclasses import dataclass, field

from .. import labhe, paillier
from ..compare import less_than_from_bits, enc_compare_a, enc_compare_b, bit_compare_a, bit_compare_b
from ..config import RunConfig
from ..crypto_core import Rng, sample_below
from ..dgk import DgkPrivateKey, DgkPublicKey, dgk_keygen
from ..errors import ProtocolOrderViolation
from ..fixedpoint import FpParams, quantize, to_signed
from ..labhe import Label, LabelRegistry, LabPair, LabCollapsed, LabeledProgram, Poly, ProgramSecret
from ..ot import ot_chooser, ot_prime_chooser, ot_prime_sender, ot_sender
from ..paillier import AHECiphertext, AhePrivateKey, AhePublicKey
from ..qp import FixedQP, condense, fixed_qp
from .messages import MsgType, PartyIO, Phase, Taint

SETUP = "setup"
CLOUD = "cloud"
ACTUATOR = "actuator"


def subsystem_name(i: int) -> str:
    return f"S{i + 1}"


def iterate_signal(k: int) -> str:
    return f"U{k}"


def _flat(M: list[list[int]]) -> list[int]:
    return [v for row in M for v in row]


def _rows(flat: list, ncols: int) -> list[list]:
    return [flat[i : i + ncols] for i in range(0, len(flat), ncols)]


# -- interactive truncation --------------------------------------------------


def truncation_offset(p: FpParams) -> int:
    """Public offset making the rounded product non-negative; a multiple of 2^l_f."""
    return 1 << (p.l + p.l_f)


def truncate_cloud(io: PartyIO, peer: str, values: list[LabCollapsed], p: FpParams, dgk_pk: DgkPublicKey,
                   rng: Rng, phase: int = Phase.TRUNC):
    """Cloud side: [[v]] at scale 2^(2 l_f) -> [[round_shift(v + rho, l_f)]] at scale 2^l_f.

    The actuator's LabHE online decryption adds the program secret rho, so
    ``values`` may carry the Collapsed offset [[v - rho]]. The shift is exact:
    the carry out of the low l_f bits of (blinded + blind) is computed with a
    DGK comparison on those bits.
    """
    if not values:
        return []
    pk = values[0].public_key
    lf = p.l_f
    offset = truncation_offset(p) + (1 << (lf - 1))
    blind_width = p.l + 2 * lf + p.lambda_stat
    blinds = [rng.bits(blind_width) for _ in values]
    out = [
        LabCollapsed(paillier.add_plain(v.alpha, offset) + paillier.encrypt(pk, R, rng))
        for v, R in zip(values, blinds)
    ]
    value_width = p.l + lf + 1
    yield io.send(peer, MsgType.TRUNC_BLINDED, out, phase, Taint.BLINDED, blind_width - value_width)
    low = (1 << lf) - 1
    deltas_a = yield from bit_compare_a(io, peer, [R & low for R in blinds], lf, dgk_pk, rng, phase)
    msg = yield io.recv(peer, MsgType.TRUNC_RESULT, phase + 3)
    hi, enc_db = msg.payload
    shift_off = truncation_offset(p) >> lf
    return [
        paillier.add_plain(y - paillier.encrypt(pk, R >> lf, rng) - less_than_from_bits(pk, da, db), -shift_off)
        for y, R, da, db in zip(hi, blinds, deltas_a, enc_db)
    ]


def truncate_actuator(io: PartyIO, peer: str, secrets: list[ProgramSecret], p: FpParams, dgk_sk: DgkPrivateKey,
                      rng: Rng, phase: int = Phase.TRUNC):
    if not secrets:
        return None
    msg = yield io.recv(peer, MsgType.TRUNC_BLINDED, phase)
    if len(msg.payload) != len(secrets):
        raise ProtocolOrderViolation("truncation batch does not match the program secrets")
    ys = [labhe.decrypt_online(ps, c) for ps, c in zip(secrets, msg.payload)]
    lf = p.l_f
    low = (1 << lf) - 1
    deltas_b = yield from bit_compare_b(io, peer, [y & low for y in ys], lf, dgk_sk, rng, phase)
    pk = secrets[0].msk.public_key
    reply = [[paillier.encrypt(pk, y >> lf, rng) for y in ys], [paillier.encrypt(pk, d, rng) for d in deltas_b]]
    yield io.send(peer, MsgType.TRUNC_RESULT, reply, phase + 3)
    return None


# -- parties -----------------------------------------------------------------


class SetupParty:
    """Knows the model; computes H, F, L, eta and ships them encrypted."""

    name = SETUP

    def __init__(self, cfg: RunConfig, rng: Rng, registry: LabelRegistry | None = None):
        self.cfg = cfg
        self.rng = rng
        self.registry = registry
        self.qp = condense(cfg.model, cfg.horizon)
        self.fq: FixedQP = fixed_qp(self.qp, cfg.fp)
        self.user: labhe.UserKey | None = None

    def initialize(self, io: PartyIO):
        io.at(0, 0)
        msg = yield io.recv(ACTUATOR, MsgType.MPK, Phase.MPK)
        mpk: AhePublicKey = msg.payload[0]
        self.user = labhe.keygen(mpk, SETUP, self.rng)
        yield io.send(ACTUATOR, MsgType.UPK, [self.user.upk], Phase.UPK, Taint.KEY)

        def enc(signal: str, values: list[int]) -> list[LabPair]:
            return [
                labhe.encrypt(mpk, self.user, Label(SETUP, signal, 0, j), v % mpk.N, self.rng, self.registry)
                for j, v in enumerate(values)
            ]

        payload = [
            enc("negH", _flat(self.fq.neg_H_over_L)),
            enc("negetaH", _flat(self.fq.neg_etaH_over_L)),
            enc("Ft", _flat(self.fq.Ft_over_L)),
            enc("eta", [self.fq.eta]),
        ]
        yield io.send(CLOUD, MsgType.MODEL_CT, payload, Phase.MODEL)


class SubsystemParty:
    """Measures its state slice and owns its slice of the input box."""

    def __init__(self, index: int, cfg: RunConfig, rng: Rng, registry: LabelRegistry | None = None):
        self.index = index
        self.name = subsystem_name(index)
        self.cfg = cfg
        self.rng = rng
        self.registry = registry
        model = cfg.model
        self.n_i = model.n_parts[index]
        self.m_i = model.m_parts[index]
        off = sum(model.m_parts[:index])
        self.l_u = [float(v) for v in cfg.spec.l_u[off : off + self.m_i]]
        self.h_u = [float(v) for v in cfg.spec.h_u[off : off + self.m_i]]
        self.x: list[float] = [0.0] * self.n_i
        self.user: labhe.UserKey | None = None
        self._offline: dict[int, list[labhe.OfflinePart]] = {}

    def measure(self, x_slice) -> None:
        self.x = [float(v) for v in x_slice]

    def initialize(self, io: PartyIO):
        io.at(0, 0)
        p = self.cfg.fp
        msg = yield io.recv(ACTUATOR, MsgType.MPK, Phase.MPK)
        mpk: AhePublicKey = msg.payload[0]
        self.mpk = mpk
        self.user = labhe.keygen(mpk, self.name, self.rng)
        yield io.send(ACTUATOR, MsgType.UPK, [self.user.upk], Phase.UPK, Taint.KEY)
        # offline halves of every measurement encryption
        for t in range(self.cfg.steps):
            self._offline[t] = [
                labhe.encrypt_offline(mpk, self.user, Label(self.name, "x", t, j), self.rng, self.registry)
                for j in range(self.n_i)
            ]
        N = self.cfg.horizon
        lo = [quantize(v, p) for _ in range(N) for v in self.l_u]
        hi = [quantize(v, p) for _ in range(N) for v in self.h_u]

        def enc(signal: str, values: list[int]) -> list[LabPair]:
            return [
                labhe.encrypt(mpk, self.user, Label(self.name, signal, 0, j), v % mpk.N, self.rng, self.registry)
                for j, v in enumerate(values)
            ]

        yield io.send(CLOUD, MsgType.BOX_CT, [enc("lu", lo), enc("hu", hi)], Phase.BOX)

    def step(self, io: PartyIO, t: int):
        io.at(t + 1, 0)
        p = self.cfg.fp
        cts = [labhe.encrypt_online(off, quantize(v, p) % self.mpk.N) for off, v in zip(self._offline.pop(t), self.x)]
        yield io.send(CLOUD, MsgType.MEAS_CT, cts, Phase.MEAS)


@dataclass
class CloudState:
    mpk: AhePublicKey | None = None
    dgk_pk: DgkPublicKey | None = None
    G1: list[list[LabPair]] = field(default_factory=list)
    G2: list[list[LabPair]] = field(default_factory=list)
    Ft: list[list[LabPair]] = field(default_factory=list)
    l_u: list[AHECiphertext] = field(default_factory=list)
    h_u: list[AHECiphertext] = field(default_factory=list)
    U: list[LabPair] = field(default_factory=list)
    U_prev: list[LabPair] = field(default_factory=list)
    tail: list[AHECiphertext] = field(default_factory=list)


class CloudParty:
    name = CLOUD

    def __init__(self, cfg: RunConfig, rng: Rng):
        self.cfg = cfg
        self.rng = rng
        self.state = CloudState()
        self.swaps: list[int] = []  # every randomize decision, for the fairness check
        self.r0_history: dict[int, list[int]] = {}  # test access: cloud share of U_0

    def initialize(self, io: PartyIO):
        io.at(0, 0)
        st = self.state
        cfg = self.cfg
        msg = yield io.recv(ACTUATOR, MsgType.MPK, Phase.MPK)
        st.mpk = msg.payload[0]
        msg = yield io.recv(ACTUATOR, MsgType.DGK_PK, Phase.DGK_PK)
        st.dgk_pk = msg.payload[0]
        msg = yield io.recv(SETUP, MsgType.MODEL_CT, Phase.MODEL)
        neg_h, neg_eta_h, ft, (eta,) = msg.payload
        d, n = cfg.size, cfg.model.n
        scale = cfg.fp.scale
        neg_h, neg_eta_h = _rows(neg_h, d), _rows(neg_eta_h, d)
        # I - H/L and eta*I - eta*H/L, with the identity as a public constant
        st.G1 = [[labhe.add_plain(c, scale) if i == j else c for j, c in enumerate(row)] for i, row in enumerate(neg_h)]
        st.G2 = [[labhe.eval_add(c, eta) if i == j else c for j, c in enumerate(row)] for i, row in enumerate(neg_eta_h)]
        st.Ft = _rows(ft, n)
        m = cfg.model.m
        st.l_u, st.h_u = [None] * d, [None] * d
        offsets = [sum(cfg.m_parts[:i]) for i in range(len(cfg.m_parts))]
        for i, m_i in enumerate(cfg.m_parts):
            msg = yield io.recv(subsystem_name(i), MsgType.BOX_CT, Phase.BOX)
            lo, hi = msg.payload
            for j, (a, b) in enumerate(zip(lo, hi)):
                pos = (j // m_i) * m + offsets[i] + j % m_i
                st.l_u[pos] = labhe.to_ahe(a, self.rng)
                st.h_u[pos] = labhe.to_ahe(b, self.rng)

    def _share_bound(self) -> int:
        return int(round(self.cfg.init_share_bound * self.cfg.fp.scale))

    def step(self, io: PartyIO, t: int):
        cfg, st, rng = self.cfg, self.state, self.rng
        p, pk = cfg.fp, self.state.mpk
        N, d, m = pk.N, cfg.size, cfg.model.m
        io.at(t + 1, 0)
        X: list[LabPair] = []
        for i in range(len(cfg.n_parts)):
            msg = yield io.recv(subsystem_name(i), MsgType.MEAS_CT, Phase.MEAS)
            X.extend(msg.payload)
        # F^T x / L once per step
        FX = [labhe.eval_dot(row, X) for row in st.Ft]
        if t == 0 or not cfg.warm_start:
            msg = yield io.recv(ACTUATOR, MsgType.INIT_ITERATE, Phase.INIT_ITERATE)
            B = self._share_bound()
            r0 = [rng.below(2 * B + 1) - B for _ in range(d)]
            self.r0_history[t] = r0
            U = [labhe.add_plain(c, r % N) for c, r in zip(msg.payload, r0)]
        else:
            shifted = st.tail + [pk.trivial(0)] * m
            masks = [sample_below(N, rng) for _ in range(d)]
            blinded = [c + paillier.encrypt(pk, -r % N, rng) for c, r in zip(shifted, masks)]
            yield io.send(ACTUATOR, MsgType.WARM_BLINDED, blinded, Phase.WARM_BLINDED, Taint.UNIFORM, N.bit_length() - 1)
            msg = yield io.recv(ACTUATOR, MsgType.WARM_REFRESHED, Phase.WARM_REFRESHED)
            U = [labhe.add_plain(c, r) for c, r in zip(msg.payload, masks)]
        st.U, st.U_prev = U, U
        for k in range(cfg.iterations):
            io.at(t + 1, k + 1)
            yield from self.encrypted_iteration(io, k, FX)

    def _randomize(self, first: list, second: list) -> tuple[list, list]:
        a, b = [], []
        for x, y in zip(first, second):
            s = self.rng.bit()
            self.swaps.append(s)
            a.append(y if s else x)
            b.append(x if s else y)
        return a, b

    def encrypted_iteration(self, io: PartyIO, k: int, FX: list[LabCollapsed]):
        cfg, st, rng = self.cfg, self.state, self.rng
        p, pk = cfg.fp, st.mpk
        N, d, m = pk.N, cfg.size, cfg.model.m
        last = k == cfg.iterations - 1
        dU = [labhe.eval_sub(a, b) for a, b in zip(st.U, st.U_prev)]
        t2 = [
            labhe.eval_sub(labhe.eval_add(labhe.eval_dot(g1, st.U), labhe.eval_dot(g2, dU)), fx)
            for g1, g2, fx in zip(st.G1, st.G2, FX)
        ]
        t_k = yield from truncate_cloud(io, ACTUATOR, t2, p, st.dgk_pk, rng)
        # min(t, h_u): delta = (a <= b) selects sigma_delta from (b, a)
        a, b = self._randomize(st.h_u, t_k)
        yield from enc_compare_a(io, ACTUATOR, a, b, p.l, p.lambda_stat, st.dgk_pk, rng, Phase.UPPER)
        upper = yield from ot_prime_sender(io, ACTUATOR, b, a, rng, Phase.UPPER)
        # max(., l_u): selector delta xor 1
        a, b = self._randomize(st.l_u, upper)
        yield from enc_compare_a(io, ACTUATOR, a, b, p.l, p.lambda_stat, st.dgk_pk, rng, Phase.LOWER)
        if last:
            st.tail = yield from ot_prime_sender(io, ACTUATOR, b[m:], a[m:], rng, Phase.LOWER)
            yield from ot_sender(io, ACTUATOR, b[:m], a[:m], rng, Phase.LOWER)
            return
        U_next = yield from ot_prime_sender(io, ACTUATOR, b, a, rng, Phase.LOWER)
        # refresh back into a LabHE pair
        masks = [sample_below(N, rng) for _ in range(d)]
        blinded = [c + paillier.encrypt(pk, -r % N, rng) for c, r in zip(U_next, masks)]
        yield io.send(ACTUATOR, MsgType.REFRESH_BLINDED, blinded, Phase.REFRESH, Taint.UNIFORM, N.bit_length() - 1)
        msg = yield io.recv(ACTUATOR, MsgType.REFRESH_REPLY, Phase.REFRESH + 1)
        st.U_prev, st.U = st.U, [labhe.add_plain(c, r) for c, r in zip(msg.payload, masks)]


class ActuatorParty:
    """Holds msk and the DGK key; receives u(t)."""

    name = ACTUATOR

    def __init__(self, cfg: RunConfig, rng: Rng, registry: LabelRegistry | None = None):
        self.cfg = cfg
        self.rng = rng
        self.registry = registry
        self.masters: labhe.MasterKeys | None = None
        self.dgk_sk: DgkPrivateKey | None = None
        self.user: labhe.UserKey | None = None
        self.usks: dict[str, bytes] = {}
        self.rho: dict[tuple[int, int], list[ProgramSecret]] = {}
        self._offline: dict[tuple[int, int], list[labhe.OfflinePart]] = {}
        self.u_history: list[list[int]] = []
        self.u0_share_history: dict[int, list[int]] = {}  # test access: actuator share of U_0
        self.secrets_prepared = 0
        self.secrets_consumed = 0

    @property
    def mpk(self) -> AhePublicKey:
        return self.masters.mpk

    def initialize(self, io: PartyIO):
        cfg = self.cfg
        io.at(0, 0)
        self.masters = labhe.init(cfg.ahe_bits, self.rng)
        cfg.fp.check_budget(self.mpk.N)
        cfg.fp.check_truncation_budget(self.mpk.N)
        _, self.dgk_sk = dgk_keygen(cfg.dgk_bits, cfg.t_param, self.rng)
        self.user = labhe.keygen(self.mpk, ACTUATOR, self.rng)
        self.usks[ACTUATOR] = self.user.usk
        others = [SETUP] + [subsystem_name(i) for i in range(len(cfg.n_parts))] + [CLOUD]
        for name in others:
            yield io.send(name, MsgType.MPK, [self.mpk], Phase.MPK, Taint.KEY)
        yield io.send(CLOUD, MsgType.DGK_PK, [self.dgk_sk.public_key], Phase.DGK_PK, Taint.KEY)
        for name in others[:-1]:
            msg = yield io.recv(name, MsgType.UPK, Phase.UPK)
            self.usks[name] = labhe.recover_usk(self.masters.msk, msg.payload[0])
        self._prepare_offline()

    # offline phase: iterate labels, [[b]] halves and program secrets for all t, k
    def _prepare_offline(self) -> None:
        cfg = self.cfg
        mpk, N = self.mpk, self.mpk.N
        d, n = cfg.size, cfg.model.n
        var = lambda party, sig, t, j: Poly.var(N, Label(party, sig, t, j))  # noqa: E731
        neg_h = [[var(SETUP, "negH", 0, i * d + j) for j in range(d)] for i in range(d)]
        neg_eta_h = [[var(SETUP, "negetaH", 0, i * d + j) for j in range(d)] for i in range(d)]
        ft = [[var(SETUP, "Ft", 0, i * n + j) for j in range(n)] for i in range(d)]
        eta = var(SETUP, "eta", 0, 0)
        scale = cfg.fp.scale
        for t in range(cfg.steps):
            x = [var(subsystem_name(i), "x", t, j) for i, n_i in enumerate(cfg.n_parts) for j in range(n_i)]
            fx = [sum((c * v for c, v in zip(row, x)), Poly(N)) for row in ft]
            for k in range(cfg.iterations):
                self._offline[(t, k)] = [
                    labhe.encrypt_offline(mpk, self.user, Label(ACTUATOR, iterate_signal(k), t, j), self.rng, self.registry)
                    for j in range(d)
                ]
                U = [var(ACTUATOR, iterate_signal(k), t, j) for j in range(d)]
                U_prev = [var(ACTUATOR, iterate_signal(max(k - 1, 0)), t, j) for j in range(d)]
                dU = [a - b for a, b in zip(U, U_prev)]
                secrets = []
                for i in range(d):
                    f = Poly(N)
                    for j in range(d):
                        g1 = neg_h[i][j] + (scale if i == j else 0)
                        g2 = neg_eta_h[i][j] + (eta if i == j else 0)
                        f = f + g1 * U[j] + g2 * dU[j]
                    f = f - fx[i]
                    secrets.append(labhe.decrypt_offline(self.masters.msk, self.usks, LabeledProgram(f.part(2))))
                self.rho[(t, k)] = secrets
                self.secrets_prepared += len(secrets)

    def _lab_encrypt(self, t: int, k: int, values: list[int]) -> list[LabPair]:
        return [labhe.encrypt_online(off, v % self.mpk.N) for off, v in zip(self._offline.pop((t, k)), values)]

    def step(self, io: PartyIO, t: int):
        cfg, rng = self.cfg, self.rng
        p = cfg.fp
        sk, N, d, m = self.masters.msk, self.mpk.N, cfg.size, cfg.model.m
        io.at(t + 1, 0)
        if t == 0 or not cfg.warm_start:
            B = int(round(cfg.init_share_bound * p.scale))
            share = [rng.below(2 * B + 1) - B for _ in range(d)]
            self.u0_share_history[t] = share
            yield io.send(CLOUD, MsgType.INIT_ITERATE, self._lab_encrypt(t, 0, share), Phase.INIT_ITERATE)
        else:
            msg = yield io.recv(CLOUD, MsgType.WARM_BLINDED, Phase.WARM_BLINDED)
            w = [paillier.decrypt(sk, c) for c in msg.payload]
            yield io.send(CLOUD, MsgType.WARM_REFRESHED, self._lab_encrypt(t, 0, w), Phase.WARM_REFRESHED)
        u = None
        for k in range(cfg.iterations):
            io.at(t + 1, k + 1)
            u = yield from self.encrypted_iteration(io, t, k)
        self.u_history.append([to_signed(v, N) for v in u])
        return self.u_history[-1]

    def encrypted_iteration(self, io: PartyIO, t: int, k: int):
        cfg, rng = self.cfg, self.rng
        p = cfg.fp
        sk, d, m = self.masters.msk, cfg.size, cfg.model.m
        last = k == cfg.iterations - 1
        rho = self.rho.pop((t, k))
        self.secrets_consumed += len(rho)
        yield from truncate_actuator(io, CLOUD, rho, p, self.dgk_sk, rng)
        delta = yield from enc_compare_b(io, CLOUD, sk, self.dgk_sk, p.l, rng, Phase.UPPER)
        yield from ot_prime_chooser(io, CLOUD, delta, self.mpk, rng, Phase.UPPER)
        delta = yield from enc_compare_b(io, CLOUD, sk, self.dgk_sk, p.l, rng, Phase.LOWER)
        sel = [1 - v for v in delta]
        if last:
            yield from ot_prime_chooser(io, CLOUD, sel[m:], self.mpk, rng, Phase.LOWER)
            u = yield from ot_chooser(io, CLOUD, sel[:m], sk, rng, Phase.LOWER)
            return u
        yield from ot_prime_chooser(io, CLOUD, sel, self.mpk, rng, Phase.LOWER)
        msg = yield io.recv(CLOUD, MsgType.REFRESH_BLINDED, Phase.REFRESH)
        w = [paillier.decrypt(sk, c) for c in msg.payload]
        yield io.send(CLOUD, MsgType.REFRESH_REPLY, self._lab_encrypt(t, k + 1, w), Phase.REFRESH + 1)
        return None
