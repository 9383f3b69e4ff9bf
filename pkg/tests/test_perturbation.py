import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.linalg import expm

from yamabe_blowup.perturbation import (CutoffProfile, Lattice, canonical_lattice,
                                        curvature_from_derivs, eval_h_full_series,
                                        eval_h_single_level, make_lattice, metric_at, rotation,
                                        scalar_curvature_fd, single_level_derivs)
from yamabe_blowup.weyl import HField, canonical_weyl


def test_lattice_orientation():
    lat = make_lattice(5, 4, 2.0)
    assert np.allclose(lat.centers[1], [0, -2, 0, 0, 0], atol=1e-15)
    assert np.allclose(rotation(4, 2, 5) @ np.eye(5)[0], [0, -1, 0, 0, 0], atol=1e-15)


@given(st.integers(1, 40), st.integers(1, 40))
def test_centers_are_rotations_of_first(k, j):
    j = (j - 1) % k + 1
    lat = make_lattice(4, k, 3.0)
    assert np.allclose(rotation(k, j, 4) @ lat.centers[0], lat.centers[j - 1], atol=1e-12)


@given(st.integers(2, 200))
def test_separation_constant(k):
    lat = make_lattice(4, k, 1.0)
    C = lat.separation_constant()
    assert 0 < C <= 0.25 + 1e-15
    assert lat.min_separation() == pytest.approx(2 * math.sin(math.pi / k))


def test_validation_reports_all_errors():
    with pytest.raises(ValueError) as ei:
        make_lattice(2, 0, -1.0, t=1.0, eps=2.0)
    msg = str(ei.value)
    for key in ("n must", "k must", "r must", "eps must"):
        assert key in msg


def test_config_roundtrip():
    lat = make_lattice(6, 5, 12.5, t=0.01, eps=0.2, c0="3/2")
    back = Lattice.from_config(lat.to_config())
    assert (back.n, back.k, back.r, back.t, back.eps, back.c0) == (6, 5, lat.r, lat.t, 0.2, lat.c0)
    can = canonical_lattice(25, 40)
    assert "auto(40)" in can.to_config()
    back = Lattice.from_config(can.to_config())
    assert back.canonical_regime and back.log_t == -40.0


def test_config_errors():
    with pytest.raises(ValueError, match="missing"):
        Lattice.from_config("n = 5\nk = 3\n")
    with pytest.raises(ValueError, match="line 2"):
        Lattice.from_config("n = 5\nbogus\n")


def test_large_k_has_no_overflow():
    lat = canonical_lattice(25, 40)
    assert math.isfinite(lat.log_r) and lat.log_t == -40
    assert np.all(np.isfinite(lat.centers))
    assert lat.support_gap() > 0


@pytest.mark.parametrize("kind", ["smooth", "bump"])
def test_cutoff_values_and_derivatives(kind):
    eta = CutoffProfile(kind)
    assert eta(0.3) == 1.0 and eta(0.5) == 1.0 and eta(1.0) == 0.0 and eta(1.3) == 0.0
    s = np.linspace(0.52, 0.98, 23)
    v = eta(s)
    assert np.all((v > 0) & (v < 1)) and np.all(np.diff(v) < 0)
    h = 1e-6
    d0, d1, d2 = eta.derivs(s)
    assert np.allclose((eta(s + h) - eta(s - h)) / (2 * h), d1, atol=1e-6)
    assert np.allclose((eta(s + h, 1) - eta(s - h, 1)) / (2 * h), d2, atol=2e-4 * np.abs(d2).max())


def test_cutoff_rejects_unknown_kind():
    with pytest.raises(ValueError):
        CutoffProfile("box")


def test_single_level_derivs_match_fd(rng):
    n = 5
    H = HField(-1.5, canonical_weyl(n))
    lat = make_lattice(n, 3, 4.0, t=0.1)
    x = lat.centers[0] + 0.8 * lat.support_radius * rng.uniform(-1, 1, (4, n)) / math.sqrt(n)
    N, DN, D2N = single_level_derivs(x, lat, H)
    h = 1e-6
    for a in range(n):
        e = np.zeros(n)
        e[a] = h
        fp = single_level_derivs(x + e, lat, H, order=1)
        fm = single_level_derivs(x - e, lat, H, order=1)
        assert np.allclose((fp[0] - fm[0]) / (2 * h), DN[:, a], atol=1e-6 * np.abs(DN).max())
        assert np.allclose((fp[1] - fm[1]) / (2 * h), D2N[:, a], atol=1e-6 * np.abs(D2N).max())


def test_field_vanishes_off_support():
    n = 5
    H = HField(1.0, canonical_weyl(n))
    lat = make_lattice(n, 4, 10.0, t=0.2)
    x = np.zeros((1, n))
    N, _ = eval_h_single_level(x, lat, H)
    assert np.all(N == 0)


def test_metric_is_unimodular_and_expansion_consistent(rng):
    n = 6
    H = HField(-2.0, canonical_weyl(n))
    lat = make_lattice(n, 3, 5.0, t=0.5, eps=0.5)
    x = lat.centers[0] + 0.3 * rng.standard_normal((8, n))
    m = metric_at(x, lat, H)
    assert m.materialized
    assert np.abs(m.det - 1).max() < 1e-12
    assert np.allclose(m.g_dn @ m.g_up, np.eye(n), atol=1e-12)
    # second-order expansion of exp differs at third order
    assert np.abs(m.g_dn - m.g_dn_2).max() < 10 * np.abs(m.g_dn - np.eye(n)).max() ** 3 + 1e-15


def test_metric_not_materialized_at_canonical_scale(H25):
    lat = canonical_lattice(25, 90)
    m = metric_at(lat.centers[:1], lat, H25)
    assert not m.materialized and np.isnan(m.det).all()
    assert np.all(np.isfinite(m.g_dn_2))


def test_scalar_curvature_round_sphere():
    # stereographic sphere: g = 4 (1+|x|^2)^-2 delta has R = n (n - 1)
    n = 4

    def metric(p):
        f = 4.0 / (1.0 + np.sum(p * p, axis=-1)) ** 2
        return f[..., None, None] * np.eye(n)

    for x in (np.zeros(n), np.array([0.3, -0.2, 0.1, 0.5])):
        assert scalar_curvature_fd(metric, x, 1e-2) == pytest.approx(n * (n - 1), rel=1e-6)


def test_curvature_expansion_matches_fd(rng):
    # R(exp(e h)) = e R1 + e^2 R2 + O(e^3) for a generic smooth h
    n = 4
    A = rng.standard_normal((n, n, n))
    B = rng.standard_normal((n, n))

    def field(p):
        p = np.atleast_2d(p)
        h = np.einsum("mij,km->kij", A, np.sin(p)) + B * np.cos(p[:, :1, None])
        h = h + np.swapaxes(h, -1, -2)
        return h - np.trace(h, axis1=-2, axis2=-1)[:, None, None] * np.eye(n) / n

    x0 = np.array([0.2, -0.1, 0.4, 0.3])
    hs = 1e-3
    h0 = field(x0)[0]
    Dh = np.zeros((n, n, n))
    D2h = np.zeros((n, n, n, n))
    I = np.eye(n) * hs
    for a in range(n):
        Dh[a] = (field(x0 + I[a])[0] - field(x0 - I[a])[0]) / (2 * hs)
        for b in range(n):
            D2h[a, b] = (field(x0 + I[a] + I[b])[0] - field(x0 + I[a] - I[b])[0]
                         - field(x0 - I[a] + I[b])[0] + field(x0 - I[a] - I[b])[0]) / (4 * hs * hs)
    R1, R2 = curvature_from_derivs(h0, Dh, D2h)
    res = []
    for e in (0.04, 0.02, 0.01):
        R = scalar_curvature_fd(lambda p: np.array([expm(e * m) for m in field(p)]), x0, 1e-2)
        res.append(abs(R - e * R1 - e * e * R2))
    assert res[0] / res[2] > 5 and res[1] / res[2] > 2.5


def test_full_series_tail_bound(H6):
    x = np.array([[1.0 / 3, 0, 0, 0, 0, 0]])
    v, bound = eval_h_full_series(x, H6, k_max=8, return_bound=True)
    v2 = eval_h_full_series(x, H6, k_max=20)
    assert np.abs(v - v2).max() <= bound
    with pytest.raises(ValueError):
        eval_h_full_series(x, H6, k_max=2)
