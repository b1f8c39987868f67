from fractions import Fraction
import math

import pytest
from hypothesis import given, strategies as st

from cipherloop.errors import BudgetExceeded, Overflow
from cipherloop.fixedpoint import (
    FpParams,
    FpValue,
    decode,
    encode,
    multiply,
    quantize,
    rescale_after_product,
    round_shift,
    to_signed,
)

N = 2**127 - 1  # any large odd modulus works for the codec


def test_width():
    assert FpParams(16, 16, 40).l == 33
    assert FpParams(3, 4, 8).scale == 16


def test_encode_examples():
    p = FpParams(8, 4, 8)
    assert encode(1.5, p, N).raw == 24
    assert encode(-1.25, p, N).raw == N - 20
    assert encode(0.0, p, N).raw == 0
    assert decode(FpValue(N - 20, 4), p, N) == -1.25


def test_quantize_ties_away_from_zero():
    p = FpParams(8, 1, 8)
    assert quantize(0.25, p) == 1
    assert quantize(-0.25, p) == -1
    assert quantize(0.2, p) == 0


@given(st.floats(-1000, 1000, allow_nan=False))
def test_quantize_error_bounded(x):
    p = FpParams(16, 16, 40)
    q = quantize(x, p)
    assert abs(q / p.scale - x) <= 2 ** -(p.l_f + 1)
    assert decode(encode(x, p, N), p, N) == q / p.scale


def test_overflow():
    p = FpParams(4, 4, 8)
    with pytest.raises(Overflow):
        quantize(16.0, p)
    with pytest.raises(Overflow):
        quantize(math.nan, p)


def fraction_round_shift(v: int, s: int) -> int:
    return math.floor(Fraction(v, 2**s) + Fraction(1, 2))


@given(st.integers(-(2**80), 2**80), st.integers(1, 40))
def test_round_shift_matches_rational_oracle(v, s):
    assert round_shift(v, s) == fraction_round_shift(v, s)


def test_round_shift_examples():
    assert round_shift(6 << 32, 16) == 6 << 16
    assert round_shift(3, 1) == 2
    assert round_shift(-3, 1) == -1


def test_rescale_after_product():
    p = FpParams(8, 4, 8)
    a, b = encode(1.5, p, N), encode(-2.25, p, N)
    prod = multiply(a, b, N)
    assert prod.scale == 8
    assert to_signed(prod.raw, N) == 24 * -36
    r = rescale_after_product(prod, p, N)
    assert decode(r, p, N) == -3.375
    with pytest.raises(ValueError):
        rescale_after_product(a, p, N)


def test_rescale_overflow():
    p = FpParams(2, 4, 8)
    big = encode(3.5, p, N)
    with pytest.raises(Overflow):
        rescale_after_product(multiply(big, big, N), p, N)


def test_to_signed_boundaries():
    assert to_signed(0, 35) == 0
    assert to_signed(17, 35) == 17
    assert to_signed(18, 35) == -17


def test_budgets():
    p = FpParams(16, 16, 40)
    p.check_budget(2**100)
    with pytest.raises(BudgetExceeded):
        p.check_budget(2**74)
    p.check_truncation_budget(2**200)
    with pytest.raises(BudgetExceeded):
        p.check_truncation_budget(2**100)
    with pytest.raises(ValueError):
        FpParams(0, 4, 8)
