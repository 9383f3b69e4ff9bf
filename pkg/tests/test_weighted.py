
import numpy as np
import pytest
from hypothesis import given, strategies as st

from yamabe_blowup.perturbation import make_lattice, rotation
from yamabe_blowup.quadrature import sphere_area
from yamabe_blowup.weighted import (WeightContext, bracket, certify_interaction, certify_step_lemma,
                                    certify_two_point, dist_min, embedding_check, embedding_ratios,
                                    gamma, holder_seminorm, holder_toolbox_check, newtonian_decay,
                                    structured_samples, weight_sum, weighted_norm)

ks = st.integers(1, 40)
svals = st.floats(0.5, 8.0)


def test_gamma_values():
    k, r = 8, 16.0
    assert gamma(1.0, k, r) == 1 and gamma(2.0, k, r) == 1
    assert gamma(2.5, k, r) == 2 and gamma(6.0, k, r) == 3
    assert gamma(8.0, k, r) == 4 and gamma(8.01, k, r) == 5 and gamma(1e6, k, r) == 5
    with pytest.raises(ValueError):
        gamma(0.0, k, r)


@given(ks, st.floats(0.01, 1e4), st.floats(0.01, 1e4))
def test_gamma_monotone(k, a, b):
    r = 3.0 * k
    lo, hi = sorted((a, b))
    assert gamma(lo, k, r) <= gamma(hi, k, r) <= k // 2 + 1


@given(ks, svals, st.integers(0, 10 ** 6))
def test_weight_sum_dominates_nearest_term(k, s, seed):
    lat = make_lattice(4, k, 2.0 * k)
    x = np.random.default_rng(seed).uniform(-3 * k, 3 * k, (8, 4))
    d = dist_min(x, lat)
    assert np.all(d >= 1)
    assert np.all(weight_sum(x, s, lat) >= d ** (-s) * (1 - 1e-12))


@given(ks, st.integers(1, 40), svals)
def test_weight_sum_rotation_invariant(k, j, s):
    lat = make_lattice(5, k, 4.0)
    x = np.random.default_rng(k).standard_normal((6, 5)) * 5
    O = rotation(k, (j - 1) % k + 1, 5)
    assert np.allclose(weight_sum(x @ O.T, s, lat), weight_sum(x, s, lat), rtol=1e-12)


@given(ks, svals)
def test_weight_sum_far_field(k, s):
    lat = make_lattice(5, k, 3.0)
    g = np.random.default_rng(k)
    x = g.standard_normal((6, 5))
    x *= 100 * lat.r / np.linalg.norm(x, axis=1, keepdims=True)
    ratio = weight_sum(x, s, lat) / (k * bracket(x) ** (-s))
    assert np.all((ratio > 0.9) & (ratio < 1.1))


def test_structured_samples_are_seeded():
    lat = make_lattice(5, 6, 24.0)
    a, b = structured_samples(lat, 3), structured_samples(lat, 3)
    c = structured_samples(lat, 4)
    assert np.array_equal(a.points, b.points) and not np.array_equal(a.points, c.points)
    assert set(np.unique(a.tags)) == {0, 1, 2, 3, 4}


def test_step_ratio_single_center_is_one():
    certs, summ = certify_step_lemma(5, [1], [4.0], 3.0)
    assert certs[0].min_ratio == pytest.approx(1.0) and certs[0].max_ratio == pytest.approx(1.0)


def test_step_ratio_band():
    certs, _ = certify_step_lemma(5, [8], [2.0], 4.0)
    c = certs[0]
    # weight_sum lies in [d^-s, k d^-s] and gamma in [1, k/2 + 1]
    assert 1 / 5 <= c.min_ratio and c.max_ratio <= 8
    # on outward rays one center dominates: ratio ~ 1/gamma
    assert c.min_ratio < 0.25 and c.band < 10
    assert c.n_probes == len(structured_samples(make_lattice(5, 8, 16.0), 0))


def test_step_lemma_rejects_small_s():
    with pytest.raises(ValueError, match="1 \\+ tau"):
        certify_step_lemma(5, [4], [2.0], 1.5, tau=1.0)
    with pytest.raises(ValueError):
        WeightContext(make_lattice(5, 2, 4.0), 1.5, tau=1.0)


@pytest.mark.parametrize("k", [4, 8, 16])
def test_far_axis_ratio(k):
    # every center is equidistant from the symmetry axis; past r/2 gamma = [k/2] + 1
    lat = make_lattice(5, k, 2.0 * k)
    x = np.zeros((1, 5))
    x[0, 2] = 1e4 * lat.r
    d = dist_min(x, lat)
    ratio = weight_sum(x, 3.0, lat) / (gamma(d, k, lat.r) * d ** -3.0)
    assert ratio[0] == pytest.approx(k / (k // 2 + 1), rel=1e-9)


@pytest.mark.xfail(strict=True, reason="far-axis ratio is k/([k/2]+1), 1.6 at k=8")
def test_far_axis_ratio_tends_to_one():
    lat = make_lattice(5, 8, 16.0)
    x = np.zeros((1, 5))
    x[0, 2] = 1e4 * lat.r
    d = dist_min(x, lat)
    ratio = weight_sum(x, 3.0, lat) / (gamma(d, 8, lat.r) * d ** -3.0)
    assert abs(ratio[0] - 1) < 0.2


def test_interaction_single_center_vanishes():
    for c in certify_interaction(1, 4.0, 2.5, 3.5, 1.0):
        assert abs(c.max_ratio) < 1e-14


def test_interaction_constant_grows_as_tau_shrinks():
    m = [certify_interaction(8, 64.0, 2.5, 3.5, tau, sharp=True)[0].max_ratio
         for tau in (1.0, 0.5, 0.25, 0.1)]
    assert all(a < b for a, b in zip(m, m[1:]))
    with pytest.raises(ValueError):
        certify_interaction(8, 64.0, 2.5, 3.5, 3.0)


def test_interaction_frozen_constant_flags():
    ok = certify_interaction(8, 64.0, 2.5, 3.5, 1.0, sharp=True, C=1.0)
    bad = certify_interaction(8, 64.0, 2.5, 3.5, 1.0, sharp=True, C=0.5)
    assert all(c.passed for c in ok) and not any(c.passed for c in bad)


def test_two_point_inequality():
    c = certify_two_point(np.zeros(5), np.r_[10.0, 0, 0, 0, 0], 2.5, 3.5, 1.0, C=2.0)
    assert c.passed and 0 < c.max_ratio < 1
    with pytest.raises(ValueError):
        certify_two_point(np.zeros(5), np.zeros(5), 2.5, 3.5, 1.0)


def test_newtonian_decay_values():
    # at y = 0 the potential is omega_{n-1} int r <r>^{-s-2} dr = omega_{n-1} / s
    n, s = 6, 2.0
    v = newtonian_decay(s, n, [0.0, 10.0, 1e4])
    assert v[0] == pytest.approx(sphere_area(n - 1) / s, rel=1e-10)
    assert max(v) / min(v) < 3
    with pytest.raises(ValueError):
        newtonian_decay(4.0, 6, [1.0])


def test_weighted_norm_of_zero():
    lat = make_lattice(5, 3, 6.0)
    f = lambda x, order: [np.zeros(len(x))] + [np.zeros((len(x), 5))] * order
    est = weighted_norm(f, WeightContext(lat, 2.0, 1), structured_samples(lat))
    assert est.value == 0.0 and est.n_pairs == 16


@given(st.floats(0.5, 3.0), st.floats(0.0, 2.0))
def test_weighted_norm_monotone_in_s(s, ds):
    lat = make_lattice(5, 3, 6.0)
    S = structured_samples(lat)

    def f(x, order):
        e = np.exp(-np.sum(x * x, axis=1) / 50)
        return [e, (-2 / 50) * e[:, None] * x][:order + 1]
    a = weighted_norm(f, WeightContext(lat, s, 1), S).value
    b = weighted_norm(f, WeightContext(lat, s + ds, 1), S).value
    assert b >= a * (1 - 1e-12)


def test_embedding_ratios_fields():
    row = embedding_ratios(5, 4, 8.0)
    assert row["tau"] == 1.5 and row["d12"] > 0 and row["norm"] > 0
    assert row["ratio_diagonal"] < row["ratio_stated"]
    with pytest.raises(ValueError):
        embedding_ratios(5, 4, 8.0, s=1.0)


@pytest.mark.slow
def test_embedding_check_summary():
    rep = embedding_check(5)
    for key in ("ratio_stated", "ratio_diagonal"):
        assert rep["summary"][key]["passed"]
    assert max(r["ratio_diagonal"] for r in rep["verification"]) < 0.4


def test_holder_seminorm_basics():
    p = np.zeros(5)
    assert holder_seminorm(p, p, np.ones(5), 0.5) == 0.0
    assert holder_seminorm(np.ones(2), np.zeros(2), np.array([1.0, 4.0]), 0.5) == 1.0


def test_holder_toolbox():
    r = holder_toolbox_check(trials=30)
    assert r["worst"]["triangle"] <= 1 + 1e-12
    assert r["worst"]["product"] <= 1 + 1e-12
    # constants frozen on seed 0 hold on a fresh seed
    C = 2 * max(r["worst"]["interp1"], r["worst"]["interp2"])
    r2 = holder_toolbox_check(trials=30, seed=1, C=C)
    assert r2["violations"] == {"interp1": 0, "interp2": 0}
