from fractions import Fraction
import math

import pytest
from hypothesis import given, strategies as st

from yamabe_blowup.scaled import LOG_LIMIT, ScaledQuantity, as_fraction

mant = st.floats(-1e6, 1e6, allow_nan=False).filter(lambda v: abs(v) > 1e-6)
tpow = st.fractions(min_value=-50, max_value=50, max_denominator=8)
epow = st.integers(0, 4)


@given(mant, tpow, epow, mant, tpow, epow)
def test_exponents_add_under_multiplication(m1, t1, e1, m2, t2, e2):
    q = ScaledQuantity(m1, t1, e1) * ScaledQuantity(m2, t2, e2)
    assert q.t_pow == t1 + t2 and q.eps_pow == e1 + e2
    assert q.mantissa == pytest.approx(m1 * m2)


@given(mant, mant, tpow, epow)
def test_addition_needs_equal_scales(a, b, t, e):
    s = ScaledQuantity(a, t, e) + ScaledQuantity(b, t, e)
    assert s.mantissa == pytest.approx(a + b)
    with pytest.raises(ValueError, match="different exponents"):
        ScaledQuantity(a, t, e) + ScaledQuantity(b, t + 1, e)


@given(mant, tpow, epow, st.floats(0, 1e3))
def test_dict_roundtrip(m, t, e, se):
    q = ScaledQuantity(m, t, e, se)
    assert ScaledQuantity.from_dict(q.to_dict()) == q


def test_no_underflow_at_large_scale():
    # t = e^-25 and t^(16+2 c0) = e^-450 is representable; e^-900 is not
    q = ScaledQuantity(2.0, 18, 2)
    assert q.materializable(-25.0, math.log(0.1))
    assert q.value(-25.0, 0.0) == pytest.approx(2.0 * math.exp(-450))
    big = ScaledQuantity(1.0, 36, 0)
    assert not big.materializable(-25.0, 0.0)
    with pytest.raises(OverflowError):
        big.value(-25.0, 0.0)
    assert 36 * 25 > LOG_LIMIT


def test_stderr_propagation():
    q = ScaledQuantity(2.0, 1, 0, 0.1) * 3.0
    assert q.stderr == pytest.approx(0.3)
    s = ScaledQuantity(1.0, 0, 0, 0.3) + ScaledQuantity(1.0, 0, 0, 0.4)
    assert s.stderr == pytest.approx(0.5)


def test_as_fraction():
    assert as_fraction(1.5) == Fraction(3, 2)
    assert as_fraction("0.1") == Fraction(1, 10)
    assert as_fraction(3) == 3
