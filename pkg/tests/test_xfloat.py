"""Extended-exponent float arithmetic against exact rationals."""

from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from knapcount.xfloat import (
    XR_ONE,
    XR_ZERO,
    XReal,
    precision,
    using_precision,
    xr_cmp,
)

REL = Fraction(1, 2 ** (precision() - 1))


def rel_err(x, exact):
    if exact == 0:
        return Fraction(0) if x.is_zero else Fraction(1)
    return abs(x.to_fraction() - exact) / exact


def test_zero_and_one():
    assert XReal.from_int(0).is_zero
    assert XR_ZERO.is_zero
    assert XR_ONE.to_fraction() == 1
    assert not XR_ONE.is_zero


def test_power_of_two_is_exact():
    x = XReal.from_int(1 << 70)
    assert x.hex_parts() == ("0x1", 70)
    assert x.to_fraction() == 1 << 70


def test_big_odd_integer_rounds_to_96_bits():
    v = (1 << 200) + 1
    assert rel_err(XReal.from_int(v), v) <= Fraction(1, 1 << 95)


def test_small_integers_are_exact():
    for v in [1, 2, 3, 7, 1000, (1 << 96) - 1]:
        assert XReal.from_int(v).to_fraction() == v


def test_mul_powers_exact():
    a = XReal.from_int(1 << 70)
    assert a.mul(a).to_fraction() == 1 << 140


def test_add_identity():
    x = XReal.from_int(12345)
    assert x.add(XR_ZERO).cmp(x) == 0
    assert XR_ZERO.add(x).cmp(x) == 0


def test_mul_by_zero():
    assert XReal.from_int(7).mul(XR_ZERO).is_zero


pos_ints = st.integers(min_value=1, max_value=1 << 150)


@given(pos_ints, pos_ints)
@settings(max_examples=200, deadline=None)
def test_add_correctly_rounded(a, b):
    x = XReal.from_int(a).add(XReal.from_int(b))
    assert rel_err(x, Fraction(a + b)) <= 3 * REL


@given(pos_ints, pos_ints)
@settings(max_examples=200, deadline=None)
def test_mul_correctly_rounded(a, b):
    x = XReal.from_int(a).mul(XReal.from_int(b))
    assert rel_err(x, Fraction(a * b)) <= 3 * REL


@given(pos_ints, pos_ints)
@settings(max_examples=200, deadline=None)
def test_div_correctly_rounded(a, b):
    x = XReal.from_int(a).div(XReal.from_int(b))
    assert rel_err(x, Fraction(a, b)) <= 3 * REL


@given(pos_ints, pos_ints, pos_ints)
@settings(max_examples=150, deadline=None)
def test_monotone_under_add_and_mul(a, b, c):
    lo, hi = sorted([a, b])
    xl, xh = XReal.from_int(lo), XReal.from_int(hi)
    xc = XReal.from_int(c)
    assert xl.add(xc).cmp(xh.add(xc)) <= 0
    assert xl.mul(xc).cmp(xh.mul(xc)) <= 0


def test_cmp_is_exact_on_representations():
    a = XReal.from_int((1 << 96) + 12)   # rounds
    b = XReal.from_int((1 << 96) + 12)
    assert a.cmp(b) == 0
    assert xr_cmp(XReal.from_int(5), XReal.from_int(6)) < 0
    assert XReal.from_int(6) > XReal.from_int(5)


def test_sub_nonneg():
    a, b = XReal.from_int(10), XReal.from_int(4)
    assert a.sub_nonneg(b).to_fraction() == 6
    with pytest.raises(Exception):
        b.sub_nonneg(XReal.from_int(400))


def test_summation_drift_bounded():
    # left-fold of 10^4 terms stays within the per-op drift envelope
    import random
    rnd = random.Random(7)
    vals = [rnd.randint(1, 1 << 120) for _ in range(10 ** 4)]
    acc = XR_ZERO
    for v in vals:
        acc = acc.add(XReal.from_int(v))
    envelope = 3 * len(vals) * REL
    assert rel_err(acc, Fraction(sum(vals))) <= envelope


def test_string_round_trip():
    for v in [1, 2, 3, 1 << 40, (1 << 90) + 777, 1 << 1024]:
        x = XReal.from_int(v)
        s = x.to_string()
        assert XReal.from_string(s).cmp(x) == 0
    assert XReal.from_string(XR_ZERO.to_string()).is_zero


def test_hex_round_trip():
    x = XReal.from_int((1 << 95) + 9).mul_pow2(-300)
    mhex, e = x.hex_parts()
    assert XReal.from_hex_parts(mhex, e).cmp(x) == 0


def test_mul_pow2():
    x = XReal.from_int(3)
    assert x.mul_pow2(5).to_fraction() == 96
    assert x.mul_pow2(-1).to_fraction() == Fraction(3, 2)


def test_from_fraction_and_float():
    assert XReal.from_fraction(Fraction(3, 4)).to_fraction() == Fraction(3, 4)
    assert XReal.from_float(0.5).to_fraction() == Fraction(1, 2)


def test_precision_context():
    with using_precision(24):
        x = XReal.from_int((1 << 60) + 1)
        assert rel_err(x, (1 << 60) + 1) <= Fraction(1, 1 << 23)
    assert precision() == 96
