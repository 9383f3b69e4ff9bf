import numpy as np
import pytest

from yamabe_blowup.bubbles import MultiBubble
from yamabe_blowup.perturbation import make_lattice
from yamabe_blowup.quadrature import DivergentIntegralError
from yamabe_blowup.reduced import (MIN_DIM, boundary_minimum_certificate, f_field, f_field_simplified,
                                   g_hat, g_hat_exact, g_hat_hessian, hessian_xi_exact,
                                   hessian_xi_mc, hessian_xi_stencil, leading_functional,
                                   profile_csv, tune_tau0)
from yamabe_blowup.weyl import HField, canonical_weyl


@pytest.fixture(scope="module")
def tuning(H25):
    return tune_tau0(25, H25)


def test_tuned_tau0(H25, tuning):
    assert tuning.tau0_star == pytest.approx(-7.040728686322099, rel=1e-12)
    assert tuning.certified()
    assert tuning.ghat_at_base == pytest.approx(-4.7924e-10, rel=1e-4)
    # the other root of the quadratic has a negative lam-lam curvature
    other = [r for r in tuning.roots if abs(r["tau0"] - tuning.tau0_star) > 1e-6]
    assert len(other) == 1 and other[0]["min_eigenvalue"] < 0


def test_tuning_is_idempotent(tuning):
    H = HField(0.0, canonical_weyl(25))
    assert tune_tau0(25, H).tau0_star == pytest.approx(tuning.tau0_star, rel=1e-12)


def test_lam_derivatives_match_fd(H25):
    h = 1e-4
    d1 = (g_hat_exact(H25, 1 + h) - g_hat_exact(H25, 1 - h)) / (2 * h)
    d2 = (g_hat_exact(H25, 1 + h, 1) - g_hat_exact(H25, 1 - h, 1)) / (2 * h)
    G0 = abs(g_hat_exact(H25))
    assert abs(d1 - g_hat_exact(H25, 1.0, 1)) < 1e-6 * G0
    assert d2 == pytest.approx(g_hat_exact(H25, 1.0, 2), rel=1e-5)
    H = H25.with_tau0(-3.0)
    d1 = (g_hat_exact(H, 1.1 + h) - g_hat_exact(H, 1.1 - h)) / (2 * h)
    assert d1 == pytest.approx(g_hat_exact(H, 1.1, 1), rel=1e-6)


def test_small_dimension_diverges():
    H = HField(1.0, canonical_weyl(MIN_DIM - 1))
    with pytest.raises(DivergentIntegralError, match="n >= 19"):
        g_hat_exact(H)
    with pytest.raises(DivergentIntegralError):
        tune_tau0(MIN_DIM - 1, H)


def test_xi_hessian_spectrum(H25):
    hx = hessian_xi_exact(H25)
    assert np.allclose(hx, hx.T, atol=1e-25)
    w = np.linalg.eigvalsh(hx)
    assert w.min() == pytest.approx(1.608e-9, rel=1e-3)
    # canonical W: 21-fold lowest eigenvalue and a 4-fold upper one
    assert np.sum(np.abs(w / w.min() - 1) < 1e-9) == 21
    assert np.sum(np.abs(w / w.min() - w.max() / w.min()) < 1e-9) == 4


def test_xi_hessian_mc_agrees(H25):
    rep = g_hat_hessian(H25, method="MC", n_dirs=4096, seed=2)
    hx = hessian_xi_exact(H25)
    z = np.abs(rep.matrix[1:, 1:] - hx) / np.maximum(rep.stderr[1:, 1:], 1e-30)
    assert np.median(z) < 2 and z.max() < 6
    assert rep.lam_lam == g_hat_exact(H25, 1.0, 2)
    assert rep.xi_min_eig_stderr > 0


def test_xi_hessian_mc_budget_check(H25):
    with pytest.raises(ValueError, match="multiple"):
        hessian_xi_mc(H25, n_dirs=100)


def test_xi_hessian_stencil_route(H25):
    # independent route: curvature of full MC G along one direction
    hx = hessian_xi_exact(H25)
    v = np.zeros(25)
    v[0] = 1.0
    (c, se), = hessian_xi_stencil(H25, [v], h=0.1, n_samples=512)
    assert abs(c - hx[0, 0]) < 4 * se + 0.05 * hx[0, 0]


def test_exact_hessian_report(H25):
    rep = g_hat_hessian(H25)
    assert rep.certified() and rep.min_eig_stderr == 0
    assert rep.min_eigenvalue == pytest.approx(2.14e-10, rel=1e-2)
    assert rep.xi_min_eigenvalue == pytest.approx(1.608e-9, rel=1e-3)
    d = rep.to_dict()
    assert d["certified"] and len(d["matrix"]) == 26


def test_mc_matches_quadratic_model(H25):
    xi = np.full(25, 0.02)
    ev = g_hat(xi, 1.0, H25, n_samples=1024)
    model = g_hat_exact(H25) + 0.5 * xi @ hessian_xi_exact(H25) @ xi
    assert ev.method == "MC"
    assert abs(ev.value - model) < 4 * ev.stderr + 1e-4 * abs(model)


def test_g_hat_input_checks(H25):
    with pytest.raises(ValueError, match="outside"):
        g_hat(np.zeros(25), 1.5, H25)
    with pytest.raises(ValueError, match="mismatch"):
        g_hat(None, 1.0, H25, n=24)
    with pytest.raises(ValueError, match="radial-exact"):
        g_hat(np.full(25, 0.01), 1.0, H25, method="radial-exact")
    ev = g_hat(None, 1.0, H25)
    assert ev.method == "radial-exact" and ev.stderr == 0


def test_f_field_forms_agree(rng):
    n = 6
    H = HField(-2.0, canonical_weyl(n))
    lat = make_lattice(n, 3, 8.0)
    xi = 0.3 * rng.uniform(-1, 1, (3, n)) / np.sqrt(n)
    mb = MultiBubble.on_lattice(lat, xi=xi, lam=[1.0, 1.2, 0.9])
    x = lat.centers[0] + rng.standard_normal((10, n))
    a, b = f_field(x, mb, H), f_field_simplified(x, mb, H)
    # the raw contraction cancels large terms; compare at the scale of the result
    assert np.abs(a - b).max() < 1e-9 * np.abs(a).max()
    base = MultiBubble.on_lattice(lat)
    assert np.all(f_field_simplified(x, base, H) == 0)


def test_leading_functional_sums_bubbles(H25):
    lat = make_lattice(25, 3, 100.0)
    mb = MultiBubble.on_lattice(lat)
    A = leading_functional(mb, H25)
    assert A.value == pytest.approx(3 * g_hat_exact(H25), rel=1e-14)
    assert A.stderr == 0


def test_boundary_certificate_requires_tuning(H25, tuning):
    with pytest.raises(ValueError, match="required"):
        boundary_minimum_certificate(3, H25)
    rep = boundary_minimum_certificate(3, H25, n_dirs=32, tuning=tuning)
    assert rep["passes"]
    assert set(rep["structured_probes"]) == {"lam+", "lam-", "xi_soft"}


def test_profile_csv(H25):
    txt = profile_csv(H25, [0.9, 1.0])
    lines = txt.splitlines()
    assert lines[0] == "lam,ghat" and len(lines) == 3 and txt.endswith("\n")
    assert float(lines[2].split(",")[1]) == g_hat_exact(H25, 1.0)
