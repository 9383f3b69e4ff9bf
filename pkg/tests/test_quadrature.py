from fractions import Fraction
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from yamabe_blowup.quadrature import (CylindricalRule, DivergentIntegralError, RadialRule,
                                      ball_volume, newtonian_radial, per_ball_mc, radial_integral,
                                      reduced_integral, sphere_area, sphere_moment)


def test_sphere_areas():
    assert sphere_area(1) == pytest.approx(2 * math.pi, rel=1e-15)
    assert sphere_area(2) == pytest.approx(4 * math.pi, rel=1e-15)
    assert ball_volume(3) == pytest.approx(4 * math.pi / 3, rel=1e-15)


def test_sphere_moments_low_order():
    n = 7
    e = [0] * n
    e[0] = 2
    assert sphere_moment(e) == Fraction(1, n)
    e[0] = 4
    assert sphere_moment(e) == Fraction(3, n * (n + 2))
    e[0], e[1] = 2, 2
    assert sphere_moment(e) == Fraction(1, n * (n + 2))
    e[0] = 3
    assert sphere_moment(e) == 0


@given(st.integers(2, 30))
def test_sphere_moments_sum_to_one(n):
    # sum_i <x_i^2> = <|x|^2> = 1
    tot = Fraction(0)
    for i in range(n):
        e = [0] * n
        e[i] = 2
        tot += sphere_moment(e)
    assert tot == 1


@pytest.mark.parametrize("n", [3, 6, 25])
def test_radial_gaussian(n):
    v, err = radial_integral(lambda r: np.exp(-r * r), n, tol=1e-13)
    assert v == pytest.approx(math.pi ** (n / 2), rel=1e-12)


def test_radial_divergence_declared():
    with pytest.raises(DivergentIntegralError):
        radial_integral(lambda r: (1 + r * r) ** -2, 6, decay=-4)


def test_radial_rule_finite_radius():
    rule = RadialRule(32, 1.0, radius=2.0)
    assert rule.integrate(lambda r: np.ones_like(r), 4) == pytest.approx(ball_volume(4, 2.0),
                                                                         rel=1e-13)


@pytest.mark.parametrize("dim", [2, 3])
def test_cylindrical_rule_gaussian(dim):
    n = 6
    anchors = [0.0, 3.0] if dim == 2 else [[0.0, 0.0], [3.0, 1.0]]
    rule = CylindricalRule(n, anchors, dim=dim, order_r=96, order_ang=48)
    if dim == 2:
        F = lambda c: np.exp(-(c[:, 0] ** 2 + c[:, 1] ** 2))
    else:
        F = lambda c: np.exp(-np.sum(c ** 2, axis=1))
    v, err = reduced_integral(F, rule, decay=None)
    assert v == pytest.approx(math.pi ** (n / 2), rel=1e-10)


def test_cylindrical_rule_converges_with_order():
    # partition-of-unity pieces are smooth, so the error falls fast with order
    errs = []
    for o in (16, 32, 48):
        rule = CylindricalRule(6, [0.0, 3.0], dim=2, order_r=2 * o, order_ang=o)
        v, _ = reduced_integral(lambda c: np.exp(-(c[:, 0] ** 2 + c[:, 1] ** 2)), rule, decay=None)
        errs.append(abs(v / math.pi ** 3 - 1))
    assert errs[0] > 100 * errs[1] > 100 * errs[2] * 100


def test_cylindrical_rule_rejects_small_n():
    with pytest.raises(ValueError):
        CylindricalRule(2, [[0.0, 0.0]], dim=3)


def test_mc_constant_is_exact_in_radial_mode():
    est = per_ball_mc(lambda x: np.ones(len(x)), np.zeros(5), 2.0, 5, seed=1, n_samples=64)
    assert est.mean == pytest.approx(ball_volume(5, 2.0), rel=1e-12)
    assert est.stderr < 1e-10


def test_mc_determinism_and_seed_sensitivity():
    f = lambda x: np.exp(-np.sum((x - 0.3) ** 2, axis=1))
    a = per_ball_mc(f, np.zeros(4), 1.5, 4, seed=7, n_samples=256, mode="uniform")
    b = per_ball_mc(f, np.zeros(4), 1.5, 4, seed=7, n_samples=256, mode="uniform")
    c = per_ball_mc(f, np.zeros(4), 1.5, 4, seed=8, n_samples=256, mode="uniform")
    assert a.to_json() == b.to_json()
    assert a.mean != c.mean


def test_mc_gaussian_within_stderr():
    n = 5
    f = lambda x: np.exp(-np.sum(x * x, axis=1) - x[:, 0])
    est = per_ball_mc(f, np.zeros(n), np.inf, n, seed=3, n_samples=2048)
    exact = math.pi ** (n / 2) * math.exp(0.25)
    assert abs(est.mean - exact) < 4 * est.stderr + 1e-12


def test_mc_rejects_few_batches():
    with pytest.raises(ValueError, match="16 batches"):
        per_ball_mc(lambda x: x[:, 0], np.zeros(3), 1.0, 3, 0, 64, n_batches=8)


@pytest.mark.parametrize("n", [5, 6, 9])
def test_newtonian_potential_of_bubble(n):
    # -Delta sigma = n(n-2) sigma^{(n+2)/(n-2)} and the kernel |x|^{2-n}/((n-2) omega) inverts -Delta
    f = lambda r: n * (n - 2) * (1.0 + r * r) ** (-(n + 2) / 2)
    for y in (0.0, 0.7, 3.0, 40.0):
        v = newtonian_radial(f, n, y)
        sig = (1.0 + y * y) ** (-(n - 2) / 2)
        assert v == pytest.approx((n - 2) * sphere_area(n - 1) * sig, rel=1e-9)


def test_newtonian_divergent():
    with pytest.raises(DivergentIntegralError):
        newtonian_radial(lambda r: (1 + r * r) ** -0.5, 4, 1.0, decay=-1)
