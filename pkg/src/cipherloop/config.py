"""Run configuration and model files (TOML)."""
from __future__ import annotations

import sys
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import BudgetExceeded, CipherloopError, ConfigInvalid
from .fixedpoint import FpParams
from .labhe import USK_BYTES
from .qp import BoxConstraints, SystemModel

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib

CONFIG_DIR = Path(__file__).parent / "configs"


class ModelFileError(ConfigInvalid):
    """The model file could not be parsed or describes an invalid system."""


@dataclass
class ModelSpec:
    model: SystemModel
    l_u: np.ndarray
    h_u: np.ndarray
    x0: np.ndarray

    def box(self, horizon: int) -> BoxConstraints:
        return BoxConstraints.stacked(self.l_u, self.h_u, horizon)


@dataclass
class RunConfig:
    spec: ModelSpec
    ahe_bits: int = 512
    dgk_bits: int = 384
    t_param: int = 80
    fp: FpParams = field(default_factory=FpParams)
    horizon: int = 4
    iterations: int = 40
    steps: int = 20
    init_share_bound: float = 0.5
    warm_start: bool = True
    tolerance: float = 2.0**-10
    seed: int = 0
    transport: str = "inproc"
    out_dir: Path = Path("out")
    model_path: Path | None = None

    @property
    def model(self) -> SystemModel:
        return self.spec.model

    @property
    def n_parts(self) -> list[int]:
        return self.spec.model.n_parts

    @property
    def m_parts(self) -> list[int]:
        return self.spec.model.m_parts

    @property
    def size(self) -> int:
        """Length of the stacked input vector U."""
        return self.horizon * self.model.m

    def validate(self) -> RunConfig:
        checks = [
            (self.ahe_bits >= 64, "ahe_bits must be at least 64"),
            (self.t_param >= 8, "t_param must be at least 8"),
            (self.horizon >= 1 and self.iterations >= 1 and self.steps >= 1, "horizon, iterations and steps must be >= 1"),
            (self.iterations < 0xFFFF, "iterations must fit the 2-byte round tag"),
            (self.transport in ("inproc", "tcp"), "transport must be inproc or tcp"),
            (self.init_share_bound >= 0, "init_share_bound must be non-negative"),
            (self.init_share_bound < 2 ** (self.fp.l_i - 2), "init_share_bound too large for l_i"),
            (self.tolerance > 0, "tolerance must be positive"),
            (len(self.spec.l_u) == self.model.m, "box bounds need one entry per input"),
        ]
        for ok, why in checks:
            if not ok:
                raise ConfigInvalid(why)
        # DGK must hold l-bit prefix sums and the comparison masks
        u_bits = self.t_param + 2
        if self.dgk_bits // 2 < u_bits + self.t_param + 8:
            raise ConfigInvalid(f"dgk_bits={self.dgk_bits} too small for t_param={self.t_param}")
        if 1 << (self.fp.l + 1) >= 1 << u_bits:
            raise ConfigInvalid("DGK plaintext space too small for the fixed-point width")
        # smallest N with the requested size has ahe_bits - 1 bits
        if self.ahe_bits - 1 <= 8 * USK_BYTES:
            raise BudgetExceeded(f"ahe_bits={self.ahe_bits} leaves no room for {8 * USK_BYTES}-bit user keys")
        self.fp.check_budget(1 << (self.ahe_bits - 1))
        self.fp.check_truncation_budget(1 << (self.ahe_bits - 1))
        return self


def _matrix(tbl: dict, key: str, path) -> np.ndarray:
    if key not in tbl:
        raise ModelFileError(f"{path}: missing '{key}'")
    try:
        arr = np.array(tbl[key], dtype=float)
    except (TypeError, ValueError) as exc:
        raise ModelFileError(f"{path}: '{key}' is not a numeric array: {exc}") from None
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    if arr.ndim > 2 or not np.all(np.isfinite(arr)):
        raise ModelFileError(f"{path}: '{key}' must be a finite matrix")
    return arr


def parse_model(data: dict, path="<model>") -> ModelSpec:
    tbl = data.get("model", data)
    mats = {k: _matrix(tbl, k, path) for k in ("A", "B", "P", "Q", "R")}
    cons = data.get("constraints", tbl)
    init = data.get("initial", tbl)
    try:
        model = SystemModel(
            mats["A"], mats["B"], mats["P"], mats["Q"], mats["R"],
            list(tbl.get("n_parts", [])), list(tbl.get("m_parts", [])),
        )
        l_u = _matrix(cons, "l_u", path).ravel()
        h_u = _matrix(cons, "h_u", path).ravel()
        x0 = _matrix(init, "x0", path).ravel()
        BoxConstraints(l_u, h_u)
    except ModelFileError:
        raise
    except (CipherloopError, ValueError) as exc:
        raise ModelFileError(f"{path}: {exc}") from None
    if x0.shape != (model.n,):
        raise ModelFileError(f"{path}: x0 needs {model.n} entries")
    if l_u.shape != (model.m,):
        raise ModelFileError(f"{path}: l_u and h_u need {model.m} entries")
    return ModelSpec(model, l_u, h_u, x0)


def load_model(path: str | Path) -> ModelSpec:
    path = Path(path)
    try:
        data = tomllib.loads(path.read_text())
    except OSError as exc:
        raise ModelFileError(f"{path}: {exc}") from None
    except tomllib.TOMLDecodeError as exc:
        raise ModelFileError(f"{path}: {exc}") from None
    return parse_model(data, path)


def load_config(path: str | Path, **overrides) -> RunConfig:
    """Read a run configuration; ``overrides`` replace fields after loading."""
    path = Path(path)
    try:
        data = tomllib.loads(path.read_text())
    except OSError as exc:
        raise ConfigInvalid(f"{path}: {exc}") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigInvalid(f"{path}: {exc}") from None
    if "model_file" in data:
        model_path = (path.parent / data["model_file"]).resolve()
        spec = load_model(model_path)
    elif "model" in data:
        model_path = None
        spec = parse_model(data, path)
    else:
        raise ConfigInvalid(f"{path}: needs model_file or a [model] table")
    crypto = data.get("crypto", {})
    fixed = data.get("fixed_point", {})
    mpc = data.get("mpc", {})
    run = data.get("run", {})
    try:
        cfg = RunConfig(
            spec=spec,
            ahe_bits=int(crypto.get("ahe_bits", 512)),
            dgk_bits=int(crypto.get("dgk_bits", 384)),
            t_param=int(crypto.get("t_param", 80)),
            fp=FpParams(int(fixed.get("l_i", 16)), int(fixed.get("l_f", 16)), int(fixed.get("lambda_stat", 40))),
            horizon=int(mpc.get("horizon", 4)),
            iterations=int(mpc.get("iterations", 40)),
            steps=int(mpc.get("steps", 20)),
            init_share_bound=float(mpc.get("init_share_bound", 0.5)),
            warm_start=bool(mpc.get("warm_start", True)),
            tolerance=float(run.get("tolerance", 2.0**-10)),
            seed=int(run.get("seed", 0)),
            transport=str(run.get("transport", "inproc")),
            out_dir=Path(run.get("out_dir", "out")),
            model_path=model_path,
        )
    except (TypeError, ValueError) as exc:
        raise ConfigInvalid(f"{path}: {exc}") from None
    cfg = replace(cfg, **{k: v for k, v in overrides.items() if v is not None})
    return cfg.validate()


def bundled(name: str) -> Path:
    """Path of a configuration shipped with the package."""
    p = CONFIG_DIR / (name if name.endswith(".toml") else f"{name}.toml")
    if not p.exists():
        raise ConfigInvalid(f"no bundled config named {name!r}")
    return p
