"""Signed fixed-point codec into Z_N and rescaling after products.

A real x is represented by the integer round(x * 2^l_f) (half away from
zero); negative integers live in the upper half of Z_N. A product of two
encodings carries scale 2*l_f and is brought back with a rounding right
shift, floor((v + 2^(l_f-1)) / 2^l_f). The encrypted pipeline performs the
same shift interactively, so both sides agree bit for bit.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import BudgetExceeded, Overflow


@dataclass(frozen=True)
class FpParams:
    l_i: int = 16
    l_f: int = 16
    lambda_stat: int = 40

    def __post_init__(self):
        if self.l_i < 1 or self.l_f < 1 or self.lambda_stat < 1:
            raise ValueError("l_i, l_f and lambda_stat must be positive")

    @property
    def l(self) -> int:
        """Total width: sign + integer + fractional bits."""
        return 1 + self.l_i + self.l_f

    @property
    def scale(self) -> int:
        return 1 << self.l_f

    def check_budget(self, N: int) -> None:
        """Blinded l-bit values must not wrap around Z_N."""
        if 1 << (self.l + self.lambda_stat + 1) >= N:
            raise BudgetExceeded(
                f"2^(l + lambda + 1) = 2^{self.l + self.lambda_stat + 1} does not fit below N "
                f"({N.bit_length()} bits)"
            )

    def check_truncation_budget(self, N: int) -> None:
        # product value (l + l_f bits), offset, and an (l + 2*l_f + lambda)-bit blind
        if 1 << (self.l + 2 * self.l_f + self.lambda_stat + 2) >= N:
            raise BudgetExceeded("truncation blinding does not fit below N")


@dataclass(frozen=True)
class FpValue:
    raw: int
    scale: int


def quantize(x: float, p: FpParams) -> int:
    """Signed integer round(x * 2^l_f), ties away from zero."""
    if not math.isfinite(x) or abs(x) >= 2**p.l_i:
        raise Overflow(f"|{x}| does not fit in {p.l_i} integer bits")
    y = math.floor(abs(x) * p.scale + 0.5)
    return -y if x < 0 else y


def to_residue(v: int, N: int) -> int:
    return v % N


def to_signed(raw: int, N: int) -> int:
    raw %= N
    return raw - N if raw >= (N + 1) // 2 else raw


def encode(x: float, p: FpParams, N: int) -> FpValue:
    return FpValue(to_residue(quantize(x, p), N), p.l_f)


def decode(v: FpValue, p: FpParams, N: int) -> float:
    return to_signed(v.raw, N) / 2**v.scale


def dequantize(v: int, p: FpParams, scale: int | None = None) -> float:
    return v / 2 ** (p.l_f if scale is None else scale)


def round_shift(v: int, shift: int) -> int:
    """floor((v + 2^(shift-1)) / 2^shift) on a signed integer."""
    return (v + (1 << (shift - 1))) >> shift


def rescale_after_product(v: FpValue, p: FpParams, N: int) -> FpValue:
    if v.scale != 2 * p.l_f:
        raise ValueError(f"expected scale {2 * p.l_f}, got {v.scale}")
    s = round_shift(to_signed(v.raw, N), p.l_f)
    if abs(s) >= 1 << (p.l_i + p.l_f):
        raise Overflow("rescaled product escapes l_i integer bits")
    return FpValue(to_residue(s, N), p.l_f)


def multiply(v1: FpValue, v2: FpValue, N: int) -> FpValue:
    return FpValue(v1.raw * v2.raw % N, v1.scale + v2.scale)
