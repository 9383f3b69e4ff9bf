"""Center lattice, cutoff, the glued perturbation field, metric and curvature.

Conventions
-----------
``x`` arrays have shape ``(..., n)``.  Field values are ``(..., n, n)``,
gradients ``(..., a, mu, nu)`` and Hessians ``(..., a, b, mu, nu)``.

The single-level field is stored normalized: the physical perturbation is
``eps * t^(8+c0) * N(x)``; the prefactor travels as a :class:`ScaledQuantity`.
"""
from dataclasses import dataclass, field
from fractions import Fraction
import math
import re

import numpy as np
from scipy.linalg import expm
from scipy.special import expit

from .scaled import ScaledQuantity, as_fraction
from .weyl import HField, eval_H, eval_H_grad, eval_H_hess, PROFILE_TAIL

__all__ = [
    "Lattice", "make_lattice", "canonical_lattice", "rotation", "CutoffProfile",
    "eval_h_single_level", "single_level_derivs", "eval_h_full_series", "level_field",
    "metric_at", "MetricSample", "curvature_expansion", "curvature_from_derivs",
    "scalar_curvature", "scalar_curvature_fd", "c3_norm_estimate", "curvature_check",
]


def rotation(k, j, n):
    """``O^{k,j}``: rotation by ``2 pi (j-1)/k`` in the (x1, x2)-plane.

    Matrix ``[[cos, sin], [-sin, cos]]`` so that ``O^{4,2} e1 = -e2``.
    """
    a = 2.0 * np.pi * (j - 1) / k
    O = np.eye(n)
    c, s = np.cos(a), np.sin(a)
    O[0, 0], O[0, 1], O[1, 0], O[1, 1] = c, s, -s, c
    return O


def _centers(n, k, r):
    j = np.arange(1, k + 1)
    a = 2.0 * np.pi * (j - 1) / k
    P = np.zeros((k, n))
    P[:, 0] = r * np.cos(a)
    P[:, 1] = -r * np.sin(a)
    return P


@dataclass(frozen=True, eq=False)
class Lattice:
    n: int
    k: int
    log_r: float
    log_t: float
    eps: float
    c0: Fraction
    canonical_regime: bool = False
    centers: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "c0", as_fraction(self.c0))
        P = _centers(self.n, self.k, self.r)
        P.setflags(write=False)
        object.__setattr__(self, "centers", P)

    @property
    def r(self):
        return math.exp(self.log_r)

    @property
    def t(self):
        return math.exp(self.log_t)

    @property
    def h_scale(self):
        """Prefactor of the normalized field: ``eps * t^(8+c0)``."""
        return ScaledQuantity(1.0, 8 + self.c0, 1)

    @property
    def kappa(self):
        """Cutoff argument factor ``k^4 t^2``."""
        return math.exp(4 * math.log(self.k) + 2 * self.log_t)

    @property
    def support_radius(self):
        """Radius ``(k^2 t)^{-1}`` of each cutoff ball."""
        return math.exp(-2 * math.log(self.k) - self.log_t)

    def chord(self, m):
        return 2.0 * self.r * math.sin(math.pi * m / self.k)

    def min_separation(self):
        return self.chord(1) if self.k > 1 else math.inf

    def separation_constant(self):
        """Smallest ``C`` with ``|P^i - P^j| >= C^{-1} m r / k`` for index gaps ``m <= k/2``.

        Since ``sin(pi m/k) >= 2 m / k`` there, ``C <= 1/4``.
        """
        if self.k < 2:
            return 0.0
        m = np.arange(1, self.k // 2 + 1)
        return float(np.max((m * self.r / self.k) / (2 * self.r * np.sin(np.pi * m / self.k))))

    def support_gap(self):
        """Distance between neighbouring cutoff balls (negative if they overlap)."""
        return self.min_separation() - 2 * self.support_radius

    def to_config(self):
        if self.canonical_regime:
            r = t = f"auto({self.k})"
        else:
            r, t = repr(self.r), repr(self.t)
        return (f"n = {self.n}\nk = {self.k}\nr = {r}\nt = {t}\n"
                f"eps = {self.eps!r}\nc0 = {self.c0}\n")

    @classmethod
    def from_config(cls, text):
        vals = {}
        for lineno, line in enumerate(text.splitlines(), 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"line {lineno}: expected 'key = value', got {line!r}")
            key, val = (s.strip() for s in line.split("=", 1))
            vals[key] = val
        missing = [k for k in ("n", "k", "r") if k not in vals]
        if missing:
            raise ValueError(f"lattice config missing keys: {', '.join(missing)}")
        n, k = int(vals["n"]), int(vals["k"])
        eps = float(vals.get("eps", 0.1))
        c0 = as_fraction(vals.get("c0", "1"))
        auto = re.fullmatch(r"auto\((\d+)\)", vals["r"].replace(" ", ""))
        tval = vals.get("t", f"auto({k})").replace(" ", "")
        tauto = re.fullmatch(r"auto\((\d+)\)", tval)
        if auto and tauto:
            if int(auto.group(1)) != k or int(tauto.group(1)) != k:
                raise ValueError("auto(k) must use the lattice's own k")
            return canonical_lattice(n, k, eps, c0)
        r = math.exp(k - math.log(k)) if auto else float(vals["r"])
        t = math.exp(-k) if tauto else float(tval)
        return make_lattice(n, k, r, t, eps, c0)

    def centers_csv(self):
        head = "j," + ",".join(f"x{i + 1}" for i in range(self.n))
        rows = [f"{j + 1}," + ",".join(f"{v:.17g}" for v in P) for j, P in enumerate(self.centers)]
        return "\n".join([head] + rows) + "\n"


def _validate(n, k, r, t, eps, c0):
    errs = []
    if not (isinstance(n, (int, np.integer)) and n >= 3):
        errs.append(f"n must be an integer >= 3 (got {n!r})")
    if not (isinstance(k, (int, np.integer)) and k >= 1):
        errs.append(f"k must be an integer >= 1 (got {k!r})")
    if not (r > 0 and math.isfinite(r)):
        errs.append(f"r must be positive and finite (got {r!r})")
    if not (t > 0 and math.isfinite(t)):
        errs.append(f"t must be positive and finite (got {t!r})")
    if not 0 < eps < 1:
        errs.append(f"eps must lie in (0, 1) (got {eps!r})")
    if not c0 > 0:
        errs.append(f"c0 must be positive (got {c0!r})")
    if errs:
        raise ValueError("; ".join(errs))


def make_lattice(n, k, r, t=None, eps=0.1, c0=1):
    """Lattice with explicit radius and scale (``t`` defaults to ``e^{-k}``)."""
    if t is None:
        t = math.exp(-k)
    c0 = as_fraction(c0)
    _validate(n, k, r, t, eps, c0)
    return Lattice(int(n), int(k), math.log(r), math.log(t), float(eps), as_fraction(c0))


def canonical_lattice(n, k, eps=0.1, c0=1):
    """``t = e^{-k}``, ``r = e^k / k``, kept in log form."""
    c0 = as_fraction(c0)
    _validate(n, k, 1.0, 1.0, eps, c0)
    return Lattice(int(n), int(k), k - math.log(k), -float(k), float(eps), as_fraction(c0), True)


class CutoffProfile:
    """Radial cutoff ``eta(s)``: 1 on ``|s| <= 1/2``, 0 on ``|s| >= 1``.

    ``kind="smooth"`` (default) is the C-infinity step
    ``psi(2-2s) / (psi(2-2s) + psi(2s-1))`` with ``psi(u) = exp(-1/u)``.
    ``kind="bump"`` is ``exp(1 - 1/(1 - q^2))``, ``q = 2|s| - 1``; it is only
    C^1 at ``|s| = 1/2`` (its second derivative jumps from 0 to -8).
    """

    support = 1.0

    def __init__(self, kind="smooth"):
        if kind not in ("smooth", "bump"):
            raise ValueError(f"unknown cutoff kind {kind!r}")
        self.kind = kind

    def __call__(self, s, deriv=0):
        return self.derivs(s, deriv)[deriv]

    def derivs(self, s, order=2):
        """``[eta, eta', eta'']`` up to ``order`` (derivatives in ``s``)."""
        s = np.asarray(s, dtype=float)
        a = np.abs(s)
        sg = np.sign(s)
        out = [np.where(a <= 0.5, 1.0, 0.0)] + [np.zeros_like(a) for _ in range(order)]
        mid = (a > 0.5) & (a < 1.0)
        if not np.any(mid):
            return out
        u = a[mid]
        if self.kind == "smooth":
            # eta = psi(2(1-s)) / (psi(2(1-s)) + psi(2s-1)) = expit(-phi)
            phi = 0.5 / (1.0 - u) - 0.5 / (u - 0.5)
            e = expit(-phi)
            d1 = 0.5 / (1.0 - u) ** 2 + 0.5 / (u - 0.5) ** 2
            d2 = 1.0 / (1.0 - u) ** 3 - 1.0 / (u - 0.5) ** 3
            vals = [e]
            if order >= 1:
                ep = -e * (1 - e) * d1
                vals.append(ep)
            if order >= 2:
                vals.append(-ep * (1 - 2 * e) * d1 - e * (1 - e) * d2)
        else:
            q = 2.0 * u - 1.0
            den = 1.0 - q * q
            e = np.exp(1.0 - 1.0 / den)
            # d/dq of -1/den = -2q/den^2
            g1 = -2.0 * q / den ** 2
            g2 = -2.0 / den ** 2 - 8.0 * q * q / den ** 3
            vals = [e]
            if order >= 1:
                vals.append(2.0 * e * g1)
            if order >= 2:
                vals.append(4.0 * e * (g1 * g1 + g2))
        for i, v in enumerate(vals):
            out[i][mid] = v * (sg[mid] ** i)
        return out


def _cutoff_sum(x, centers, kappa, H, eta, order, weight=1.0):
    """``sum_j weight * eta(kappa |x - P_j|^2) H(x - P_j)`` and derivatives."""
    x = np.asarray(x, dtype=float)
    n = x.shape[-1]
    flat = x.reshape(-1, n)
    outs = [np.zeros((len(flat),) + (n,) * (2 + i)) for i in range(order + 1)]
    for P in centers:
        y = flat - P
        s = kappa * np.sum(y * y, axis=1)
        idx = np.nonzero(s < eta.support)[0]
        if len(idx) == 0:
            continue
        ys = y[idx]
        e = eta.derivs(s[idx], order)
        Hv = eval_H(H, ys)
        outs[0][idx] += weight * e[0][:, None, None] * Hv
        if order >= 1:
            G = eval_H_grad(H, ys)
            ds = 2 * kappa * ys
            outs[1][idx] += weight * (e[1][:, None, None, None] * ds[:, :, None, None] * Hv[:, None]
                                      + e[0][:, None, None, None] * G)
        if order >= 2:
            D2 = eval_H_hess(H, ys)
            dsds = ds[:, :, None] * ds[:, None, :]
            term = (e[2][:, None, None] * dsds + 2 * kappa * e[1][:, None, None] * np.eye(n))
            cross = ds[:, :, None, None, None] * G[:, None] + ds[:, None, :, None, None] * G[:, :, None]
            outs[2][idx] += weight * (term[..., None, None] * Hv[:, None, None]
                                      + e[1][:, None, None, None, None] * cross
                                      + e[0][:, None, None, None, None] * D2)
    shape = x.shape[:-1]
    return [o.reshape(shape + o.shape[1:]) for o in outs]


def eval_h_single_level(x, lat, H, eta=None):
    """Normalized level-k field ``N(x)`` and its prefactor ``(1, 8 + c0, 1)``."""
    eta = eta or CutoffProfile()
    if not np.all(np.isfinite(x)):
        raise ValueError("non-finite evaluation point")
    N = _cutoff_sum(x, lat.centers, lat.kappa, H, eta, 0)[0]
    return N, lat.h_scale


def single_level_derivs(x, lat, H, eta=None, order=2):
    """``[N, DN, D2N]`` of the normalized single-level field (analytic chain rule)."""
    eta = eta or CutoffProfile()
    return _cutoff_sum(x, lat.centers, lat.kappa, H, eta, order)


def _level_H(H, k):
    """Profile of ``e^{-8k} H(e^k y)``: coefficients ``(tau0 e^{-6k}, 5 e^{-4k}, -e^{-2k}, 1/20)``."""
    c = H.coeffs
    return HField(H.tau0, H.W, (c[0] * math.exp(-6 * k), c[1] * math.exp(-4 * k),
                                c[2] * math.exp(-2 * k), c[3]))


def level_field(xh, H, eta, c0, k, order=0):
    """Level-``k`` term ``e^{-(8+c0)k} hat h_k`` of the glued series (unit-scale coordinates)."""
    n = H.n
    centers = _centers(n, k, 1.0 / k)
    return _cutoff_sum(xh, centers, float(k) ** 4, _level_H(H, k), eta, order,
                       weight=math.exp(-float(c0) * k))


def eval_h_full_series(xh, H, eta=None, c0=1, k_max=40, order=0, return_bound=False):
    """``sum_{k=3}^{k_max} e^{-(8+c0)k} hat h_k(xh)``.

    With ``return_bound`` also returns a bound on the dropped levels,
    ``sum_{k > k_max} e^{-c0 k} sup_{|y|<=1} |p_k(|y|^2)| |W|_F``, where
    ``p_k`` is the rescaled profile (its sup over the unit ball is below
    ``|tau0| e^{-6k} + 5 e^{-4k} + e^{-2k} + 1/20``).
    """
    if k_max < 3:
        raise ValueError("k_max must be >= 3")
    eta = eta or CutoffProfile()
    c0 = float(c0)
    out = None
    for k in range(3, int(k_max) + 1):
        term = level_field(xh, H, eta, c0, k, order)
        out = term if out is None else [a + b for a, b in zip(out, term)]
    res = out[0] if order == 0 else out
    if not return_bound:
        return res
    wn = float(np.linalg.norm(H.W.coeffs))
    kk = np.arange(int(k_max) + 1, int(k_max) + 400)
    tail = np.exp(-c0 * kk) * (abs(H.coeffs[0]) * np.exp(-6 * kk) + 5 * np.exp(-4 * kk)
                               + np.exp(-2 * kk) + PROFILE_TAIL[2])
    return res, float(wn * tail.sum())


def c3_norm_estimate(H, eta=None, c0=1, k_max=12, n_samples=200, seed=0):
    """Sampled sup of ``|D^m hat h|`` for ``m = 0, 1, 2`` and a difference estimate for ``m = 3``.

    Points are drawn inside the level balls (where the field lives).  The
    returned dict also gives the factor by which ``W`` would have to shrink
    for the sampled C^3 norm to fall below 1.
    """
    eta = eta or CutoffProfile()
    n = H.n
    rng = np.random.default_rng(seed)
    pts = []
    for k in range(3, k_max + 1):
        C = _centers(n, k, 1.0 / k)
        d = rng.standard_normal((n_samples, n))
        d /= np.linalg.norm(d, axis=1, keepdims=True)
        rad = rng.random(n_samples) / k ** 2
        pts.append(C[rng.integers(0, k, n_samples)] + d * rad[:, None])
    pts = np.concatenate(pts)
    vals = eval_h_full_series(pts, H, eta, c0, k_max, order=2)
    sup = [float(np.max(np.linalg.norm(v.reshape(len(pts), -1), axis=1))) for v in vals]
    h = 1e-6
    d3 = 0.0
    for a in range(n):
        e = np.zeros(n)
        e[a] = h
        hp = eval_h_full_series(pts + e, H, eta, c0, k_max, order=2)[2]
        hm = eval_h_full_series(pts - e, H, eta, c0, k_max, order=2)[2]
        d3 += np.sum(((hp - hm) / (2 * h)).reshape(len(pts), -1) ** 2, axis=1)
    sup.append(float(np.sqrt(d3).max()))
    total = sum(sup)
    return {"sup_by_order": sup, "c3_norm": total,
            "w_rescale": 1.0 if total < 1 else 1.0 / (1.01 * total)}


@dataclass
class MetricSample:
    g_dn: np.ndarray
    g_up: np.ndarray
    det: np.ndarray
    g_dn_2: np.ndarray
    g_up_2: np.ndarray
    h_scale: ScaledQuantity
    materialized: bool


def metric_at(x, lat, H, eta=None, normalized=False):
    """Metric ``exp(eps h)`` with ``h = t^(8+c0) N`` and its second-order expansions.

    When the prefactor ``eps t^(8+c0)`` leaves the materialization window (or
    with ``normalized=True``) the normalized field ``N`` is used with
    ``eps`` alone and the returned ``h_scale`` records what was dropped; in
    the first case ``materialized`` is False and only the expansion terms
    (in units of the symbolic prefactor) are meaningful.
    """
    N, scale = eval_h_single_level(x, lat, H, eta)
    log_eps = math.log(lat.eps)
    if normalized:
        a, materialized = lat.eps, True
        scale = ScaledQuantity(1.0, scale.t_pow, 0)
    elif scale.materializable(lat.log_t, log_eps):
        a, materialized = scale.value(lat.log_t, log_eps), True
    else:
        a, materialized = 1.0, False
    h = a * N
    n = lat.n
    eye = np.broadcast_to(np.eye(n), h.shape)
    hh = h @ h
    g2 = eye + h + hh / 2
    gi2 = eye - h + hh / 2
    if not materialized:
        nanm = np.full(h.shape, np.nan)
        return MetricSample(nanm, nanm, np.full(h.shape[:-2], np.nan), g2, gi2, scale, False)
    g = expm(h)
    gi = expm(-h)
    det = np.linalg.det(g)
    return MetricSample(g, gi, det, g2, gi2, scale, True)


def curvature_from_derivs(h, Dh, D2h):
    """Linear and quadratic scalar-curvature coefficients of ``g = exp(eps h)``.

    ``R1 = D_{mu nu} h_{mu nu} - D_{mu mu} h_{nu nu}`` and the five-term ``R2``.
    """
    R1 = np.einsum("...mnmn->...", D2h) - np.einsum("...mmnn->...", D2h)
    tr_h_dd = np.einsum("...mnaa->...mn", D2h)          # D_{mu nu} h_{aa}
    div_d = np.einsum("...maan->...mn", D2h)            # D_{mu a} h_{a nu}
    div = np.einsum("...mmn->...n", Dh)                 # D_mu h_{mu nu}
    dtr = np.einsum("...naa->...n", Dh)                 # D_nu h_{aa}
    R2 = (np.einsum("...mn,...mn->...", h, tr_h_dd - div_d)
          + np.einsum("...n,...n->...", div, dtr)
          - 0.5 * np.einsum("...n,...n->...", div, div)
          - 0.25 * np.einsum("...m,...m->...", dtr, dtr)
          - 0.25 * np.sum(Dh * Dh, axis=(-3, -2, -1)))
    return R1, R2


def curvature_expansion(x, lat, H, eta=None):
    """``(R1, R2)`` for the normalized field ``N``.

    The physical curvature is ``R_g = eps t^(8+c0) R1 + eps^2 t^(16+2c0) R2 + ...``;
    the two prefactors are ``lat.h_scale`` and its square.
    """
    N, DN, D2N = single_level_derivs(x, lat, H, eta, 2)
    return curvature_from_derivs(N, DN, D2N)


def scalar_curvature(g, dg, d2g):
    """Scalar curvature from the metric and its first/second partial derivatives.

    ``dg[..., c, a, b] = d_c g_ab``, ``d2g[..., c, d, a, b] = d_c d_d g_ab``.
    Sign convention: the round sphere has positive curvature.
    """
    gi = np.linalg.inv(g)
    # lower Christoffel symbols Gl[b, m, v] and their derivatives
    Gl = 0.5 * (np.einsum("...mbv->...bmv", dg) + np.einsum("...vbm->...bmv", dg)
                - dg)
    dGl = 0.5 * (np.einsum("...lmbv->...lbmv", d2g) + np.einsum("...lvbm->...lbmv", d2g)
                 - d2g)
    Gam = np.einsum("...ab,...bmv->...amv", gi, Gl)
    dgi = -np.einsum("...ab,...lbc,...cd->...lad", gi, dg, gi)
    dGam = (np.einsum("...lab,...bmv->...lamv", dgi, Gl)
            + np.einsum("...ab,...lbmv->...lamv", gi, dGl))
    # Ric_{bv} = d_a Gam^a_{vb} - d_v Gam^a_{ab} + Gam^a_{ac} Gam^c_{vb} - Gam^a_{vc} Gam^c_{ab}
    ric = (np.einsum("...aavb->...bv", dGam) - np.einsum("...vaab->...bv", dGam)
           + np.einsum("...aac,...cvb->...bv", Gam, Gam)
           - np.einsum("...avc,...cab->...bv", Gam, Gam))
    return np.einsum("...bv,...bv->...", gi, ric)


_D1 = np.array([1.0, -8.0, 0.0, 8.0, -1.0]) / 12.0
_D2 = np.array([-1.0, 16.0, -30.0, 16.0, -1.0]) / 12.0
_OFF = np.arange(-2, 3)


def scalar_curvature_fd(metric_fn, x, step=1e-2):
    """Scalar curvature with fourth-order central differences of ``metric_fn``.

    ``metric_fn`` maps points ``(M, n)`` to metrics ``(M, n, n)``.
    """
    x = np.asarray(x, dtype=float)
    n = x.shape[-1]
    h = step
    pts = [x]
    eye = np.eye(n) * h
    for a in range(n):
        for o in _OFF:
            pts.append(x + o * eye[a])
    pairs = [(a, b) for a in range(n) for b in range(a + 1, n)]
    for a, b in pairs:
        for oa in _OFF:
            for ob in _OFF:
                pts.append(x + oa * eye[a] + ob * eye[b])
    G = metric_fn(np.array(pts))
    g = G[0]
    idx = 1
    dg = np.zeros((n, n, n))
    d2g = np.zeros((n, n, n, n))
    for a in range(n):
        block = G[idx:idx + 5]
        idx += 5
        dg[a] = np.tensordot(_D1, block, axes=1) / h
        d2g[a, a] = np.tensordot(_D2, block, axes=1) / h ** 2
    for a, b in pairs:
        block = G[idx:idx + 25].reshape(5, 5, n, n)
        idx += 25
        v = np.einsum("i,j,ijpq->pq", _D1, _D1, block) / h ** 2
        d2g[a, b] = d2g[b, a] = v
    return float(scalar_curvature(g, dg, d2g))


def curvature_check(lat, H, eps_list=(0.2, 0.1, 0.05), n_probe=10, step=2e-3, seed=0, eta=None):
    """Finite-difference scalar curvature of ``exp(eps N)`` against ``eps R1 + eps^2 R2``.

    Probes lie inside the first cutoff ball.  The FD curvature is Richardson
    extrapolated, ``(16 R_{h/2} - R_h) / 15``.  Returns per-eps residuals
    (max over probes), their log-log slope and the worst ``|det g - 1|``.
    """
    eta = eta or CutoffProfile()
    n = lat.n
    g = np.random.default_rng([int(seed), 3])
    d = g.standard_normal((n_probe, n))
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    rad = lat.support_radius * g.uniform(0.1, 0.95, n_probe)
    x = lat.centers[0] + d * rad[:, None]
    R1, R2 = curvature_expansion(x, lat, H, eta)
    resid, det_err = [], 0.0
    for e in eps_list:
        def metric(p, e=e):
            return expm(e * eval_h_single_level(p, lat, H, eta)[0])
        det_err = max(det_err, float(np.max(np.abs(np.linalg.det(metric(x)) - 1.0))))
        res = []
        for i in range(n_probe):
            a = scalar_curvature_fd(metric, x[i], step)
            b = scalar_curvature_fd(metric, x[i], step / 2)
            res.append(abs((16 * b - a) / 15 - e * R1[i] - e * e * R2[i]))
        resid.append(float(max(res)))
    slope = float(np.polyfit(np.log(eps_list), np.log(resid), 1)[0])
    return {"eps": list(eps_list), "residual": resid, "slope": slope, "det_err": det_err,
            "n_probe": n_probe, "step": step, "seed": int(seed)}
