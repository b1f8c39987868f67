"""Plaintext MPC layer: condensing, FGM constants, float and fixed-point FGM, plant.

The fixed-point solver is the reference for the encrypted pipeline: it uses
exactly the integer quantities Setup encrypts and the same expansion of the
FGM step in terms of U_k and U_{k-1}.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatch, NonPsd, Overflow
from .fixedpoint import FpParams, quantize, round_shift


@dataclass
class SystemModel:
    A: np.ndarray
    B: np.ndarray
    P: np.ndarray
    Q: np.ndarray
    R: np.ndarray
    n_parts: list[int] = field(default_factory=list)
    m_parts: list[int] = field(default_factory=list)

    def __post_init__(self):
        self.A = np.atleast_2d(np.asarray(self.A, dtype=float))
        self.B = np.asarray(self.B, dtype=float).reshape(self.A.shape[0], -1)
        self.P = np.atleast_2d(np.asarray(self.P, dtype=float))
        self.Q = np.atleast_2d(np.asarray(self.Q, dtype=float))
        self.R = np.atleast_2d(np.asarray(self.R, dtype=float))
        n, m = self.n, self.m
        if self.A.shape != (n, n):
            raise DimensionMismatch("A must be square")
        for name, mat, k in (("P", self.P, n), ("Q", self.Q, n), ("R", self.R, m)):
            if mat.shape != (k, k):
                raise DimensionMismatch(f"{name} must be {k}x{k}, got {mat.shape}")
            if not np.allclose(mat, mat.T):
                raise NonPsd(f"{name} is not symmetric")
            if np.linalg.eigvalsh(mat).min() <= 0:
                raise NonPsd(f"{name} is not positive definite")
        if not self.n_parts:
            self.n_parts = [n]
        if not self.m_parts:
            self.m_parts = [m]
        if sum(self.n_parts) != n or sum(self.m_parts) != m or len(self.n_parts) != len(self.m_parts):
            raise DimensionMismatch("subsystem partition does not match n, m")

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self.B.shape[1]

    @property
    def subsystems(self) -> int:
        return len(self.n_parts)


@dataclass
class BoxConstraints:
    l_u: np.ndarray
    h_u: np.ndarray

    def __post_init__(self):
        self.l_u = np.asarray(self.l_u, dtype=float).ravel()
        self.h_u = np.asarray(self.h_u, dtype=float).ravel()
        if self.l_u.shape != self.h_u.shape:
            raise DimensionMismatch("l_u and h_u differ in length")
        if np.any(self.l_u > 0) or np.any(self.h_u < 0):
            raise ValueError("the box must contain the origin")

    @classmethod
    def stacked(cls, l_u, h_u, horizon: int) -> BoxConstraints:
        """Repeat a per-step box over the horizon."""
        return cls(np.tile(np.ravel(l_u), horizon), np.tile(np.ravel(h_u), horizon))

    def project(self, U: np.ndarray) -> np.ndarray:
        return np.minimum(np.maximum(U, self.l_u), self.h_u)


@dataclass
class QPData:
    H: np.ndarray
    F: np.ndarray
    L: float
    eta: float
    kappa: float


def prediction_matrices(model: SystemModel, N: int) -> tuple[np.ndarray, np.ndarray]:
    """Gamma = [A; A^2; ...; A^N] and the block lower-triangular Omega."""
    n, m = model.n, model.m
    gamma = np.zeros((N * n, n))
    omega = np.zeros((N * n, N * m))
    Ak = np.eye(n)
    powers = [np.eye(n)]
    for i in range(N):
        Ak = model.A @ Ak
        powers.append(Ak)
        gamma[i * n : (i + 1) * n] = Ak
    for i in range(N):
        for j in range(i + 1):
            omega[i * n : (i + 1) * n, j * m : (j + 1) * m] = powers[i - j] @ model.B
    return gamma, omega


def fgm_constants(H: np.ndarray) -> tuple[float, float, float]:
    eig = np.linalg.eigvalsh(H)
    lmin, lmax = float(eig[0]), float(eig[-1])
    if lmin <= 0:
        raise NonPsd("H is not positive definite")
    kappa = lmax / lmin
    eta = (np.sqrt(kappa) - 1) / (np.sqrt(kappa) + 1)
    return lmax, float(eta), kappa


def condense(model: SystemModel, N: int) -> QPData:
    if N < 1:
        raise ValueError("horizon must be >= 1")
    gamma, omega = prediction_matrices(model, N)
    Qbar = np.kron(np.eye(N), model.Q)
    Qbar[-model.n :, -model.n :] = model.P
    Rbar = np.kron(np.eye(N), model.R)
    H = omega.T @ Qbar @ omega + Rbar
    H = (H + H.T) / 2
    F = gamma.T @ Qbar @ omega
    try:
        np.linalg.cholesky(H)
    except np.linalg.LinAlgError:
        raise NonPsd("condensed Hessian failed the Cholesky check") from None
    L, eta, kappa = fgm_constants(H)
    return QPData(H, F, L, eta, kappa)


def mpc_objective(model: SystemModel, x0: np.ndarray, U: np.ndarray) -> float:
    """Direct evaluation of the horizon cost along simulated dynamics."""
    m = model.m
    N = len(U) // m
    x = np.asarray(x0, dtype=float)
    cost = 0.0
    for k in range(N):
        u = U[k * m : (k + 1) * m]
        cost += x @ model.Q @ x + u @ model.R @ u
        x = model.A @ x + model.B @ u
    cost += x @ model.P @ x
    return 0.5 * cost


def fgm_solve(qp: QPData, box: BoxConstraints, x: np.ndarray, K: int, U0: np.ndarray) -> np.ndarray:
    """K projected fast-gradient iterations from U0 (float reference)."""
    U_prev = np.asarray(U0, dtype=float).copy()
    z = U_prev.copy()
    lin = qp.F.T @ np.asarray(x, dtype=float)
    for _ in range(K):
        t = z - (qp.H @ z + lin) / qp.L
        U = box.project(t)
        z = (1 + qp.eta) * U - qp.eta * U_prev
        U_prev = U
    return U_prev


@dataclass
class FixedQP:
    """Integer quantities of the encrypted FGM step, all at scale 2^l_f."""

    neg_H_over_L: list[list[int]]
    neg_etaH_over_L: list[list[int]]
    Ft_over_L: list[list[int]]
    eta: int
    p: FpParams

    @property
    def size(self) -> int:
        return len(self.neg_H_over_L)

    @property
    def G1(self) -> list[list[int]]:
        """I - H/L with the identity at scale 2^l_f."""
        s = self.p.scale
        return [[v + (s if i == j else 0) for j, v in enumerate(row)] for i, row in enumerate(self.neg_H_over_L)]

    @property
    def G2(self) -> list[list[int]]:
        """eta*I - eta*H/L."""
        return [[v + (self.eta if i == j else 0) for j, v in enumerate(row)] for i, row in enumerate(self.neg_etaH_over_L)]


def fixed_qp(qp: QPData, p: FpParams) -> FixedQP:
    q = lambda M: [[quantize(float(v), p) for v in row] for row in np.atleast_2d(M)]  # noqa: E731
    return FixedQP(
        q(-qp.H / qp.L),
        q(-qp.eta * qp.H / qp.L),
        q(qp.F.T / qp.L),
        quantize(qp.eta, p),
        p,
    )


def quantize_vec(v, p: FpParams) -> list[int]:
    return [quantize(float(x), p) for x in np.ravel(v)]


def _matvec(M: list[list[int]], v: list[int]) -> list[int]:
    return [sum(a * b for a, b in zip(row, v)) for row in M]


def fgm_step_fixed(fq: FixedQP, lin: list[int], U: list[int], U_prev: list[int]) -> list[int]:
    """Unprojected iterate t_k at scale 2^l_f, using the U_k / U_{k-1} expansion.

    ``lin`` is F^T x / L as a scale-2^(2 l_f) integer vector.
    """
    dU = [a - b for a, b in zip(U, U_prev)]
    t2 = [a + b - c for a, b, c in zip(_matvec(fq.G1, U), _matvec(fq.G2, dU), lin)]
    return [round_shift(v, fq.p.l_f) for v in t2]


def check_width(values: list[int], p: FpParams) -> None:
    lim = 1 << (p.l - 1)
    for v in values:
        if not -lim <= v < lim:
            raise Overflow(f"fixed-point value {v} exceeds {p.l} signed bits")


def fgm_solve_fixed(
    qp: QPData | FixedQP,
    box: BoxConstraints | tuple[list[int], list[int]],
    x,
    K: int,
    U0: list[int] | None,
    p: FpParams,
) -> list[int]:
    """Fixed-point FGM; returns U_K as signed integers at scale 2^l_f."""
    fq = qp if isinstance(qp, FixedQP) else fixed_qp(qp, p)
    if isinstance(box, BoxConstraints):
        lu, hu = quantize_vec(box.l_u, p), quantize_vec(box.h_u, p)
    else:
        lu, hu = box
    xn = x if isinstance(x, list) else quantize_vec(x, p)
    lin = _matvec(fq.Ft_over_L, xn)
    U = list(U0) if U0 is not None else [0] * fq.size
    U_prev = list(U)
    for _ in range(K):
        t = fgm_step_fixed(fq, lin, U, U_prev)
        check_width(t, p)
        U_prev, U = U, [max(min(v, h), lo) for v, h, lo in zip(t, hu, lu)]
    return U


def plant_step(model: SystemModel, x: np.ndarray, u: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    if x.shape != (model.n,) or u.shape != (model.m,):
        raise DimensionMismatch(f"expected x of {model.n} and u of {model.m} entries")
    return model.A @ x + model.B @ u


def extract_first_input(U, m: int):
    if len(U) < m:
        raise DimensionMismatch("stacked input shorter than m")
    return U[:m]


def warm_start(U, m: int):
    """Drop the first m entries and append m zeros."""
    if len(U) < m or len(U) % m:
        raise DimensionMismatch("stacked input length is not a multiple of m")
    if isinstance(U, np.ndarray):
        return np.concatenate([U[m:], np.zeros(m, dtype=U.dtype)])
    return list(U[m:]) + [0] * m


def closed_loop_float(model, qp, box, x0, T, K, U0=None, warm=True):
    """Receding-horizon simulation with the float FGM. Returns (xs, us)."""
    x = np.asarray(x0, dtype=float)
    U = np.zeros(len(box.l_u)) if U0 is None else np.asarray(U0, dtype=float)
    xs, us = [x], []
    for _ in range(T):
        UK = fgm_solve(qp, box, x, K, U)
        u = extract_first_input(UK, model.m)
        x = plant_step(model, x, u)
        xs.append(x)
        us.append(u)
        U = warm_start(UK, model.m) if warm else np.zeros_like(UK)
    return np.array(xs), np.array(us)


def closed_loop_fixed(model, qp, box, x0, T, K, p: FpParams, U0: list[int] | None = None, warm=True):
    """Receding-horizon simulation with the fixed-point FGM (the bit-exact oracle)."""
    fq = fixed_qp(qp, p)
    lu, hu = quantize_vec(box.l_u, p), quantize_vec(box.h_u, p)
    x = np.asarray(x0, dtype=float)
    U = [0] * fq.size if U0 is None else list(U0)
    xs, us_int = [x], []
    for _ in range(T):
        UK = fgm_solve_fixed(fq, (lu, hu), quantize_vec(x, p), K, U, p)
        u_int = extract_first_input(UK, model.m)
        u = np.array([v / p.scale for v in u_int])
        x = plant_step(model, x, u)
        xs.append(x)
        us_int.append(list(u_int))
        U = warm_start(UK, model.m) if warm else [0] * fq.size
    return np.array(xs), us_int
