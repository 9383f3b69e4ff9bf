"""Integration back-ends.

* exact sphere moments (rational arithmetic),
* Gauss-Legendre radial rules on ``(0, inf)`` through ``r = L tan(theta)``,
* planar-symmetric reductions: a 2-D rule for integrands that only see two
  centers on a line, and a 3-D rule ``(x1, x2, rho)`` for integrands that are
  invariant under rotations fixing the ``(x1, x2)`` plane,
* Monte Carlo over balls with counter-based random streams,
* the radial Newtonian potential.
"""
from dataclasses import dataclass, field
from fractions import Fraction
from math import pi
import json

import numpy as np
from scipy import integrate as sint
from scipy.special import gammaln

__all__ = [
    "sphere_area", "ball_volume", "sphere_moment", "RadialRule", "radial_integral",
    "CylindricalRule", "reduced_integral", "MCEstimate", "ball_samples", "per_ball_mc",
    "newtonian_radial", "DivergentIntegralError",
]


class DivergentIntegralError(ValueError):
    pass


def sphere_area(m):
    """Surface area of the unit sphere ``S^m`` in ``R^{m+1}``."""
    return float(np.exp(np.log(2.0) + 0.5 * (m + 1) * np.log(pi) - gammaln(0.5 * (m + 1))))


def ball_volume(n, R=1.0):
    return sphere_area(n - 1) * R ** n / n


def _double_fact(m):
    out = 1
    while m > 1:
        out *= m
        m -= 2
    return out


def sphere_moment(exponents):
    """Exact average of ``prod x_i^{a_i}`` over the unit sphere ``S^{n-1}``, ``n = len(a)``."""
    a = [int(v) for v in exponents]
    if any(v < 0 for v in a):
        raise ValueError("exponents must be non-negative")
    if any(v % 2 for v in a):
        return Fraction(0)
    n = len(a)
    num = 1
    for v in a:
        num *= _double_fact(v - 1)
    den = 1
    for j in range(sum(a) // 2):
        den *= n + 2 * j
    return Fraction(num, den)


def _gl(m):
    cache = _gl.__dict__.setdefault("cache", {})
    if m not in cache:
        cache[m] = np.polynomial.legendre.leggauss(m)
    return cache[m]


class RadialRule:
    """Nodes/weights for ``int_0^R g(r) dr`` with ``r = L tan(theta)``.

    ``radius=None`` means ``R = inf``.
    """

    def __init__(self, order=64, scale=1.0, radius=None):
        self.order, self.scale, self.radius = int(order), float(scale), radius
        x, w = _gl(self.order)
        top = np.pi / 2 if radius is None else np.arctan(radius / scale)
        th = 0.5 * (x + 1.0) * top
        wt = 0.5 * w * top
        self.nodes = scale * np.tan(th)
        self.weights = wt * scale / np.cos(th) ** 2

    def integrate(self, f, n):
        """``omega_{n-1} int f(r) r^{n-1} dr``; ``f`` vectorized over r."""
        r = self.nodes
        return sphere_area(n - 1) * np.sum(self.weights * np.asarray(f(r)) * r ** (n - 1))


def radial_integral(f, n, decay=None, scale=1.0, radius=None, tol=1e-10,
                    start=32, max_order=8192):
    """``omega_{n-1} int_0^R f(r) r^{n-1} dr`` with adaptive order doubling.

    ``decay`` declares ``f ~ r^decay`` at infinity; the rule refuses integrals
    that this declaration makes divergent.  Returns ``(value, error_estimate)``.
    """
    if radius is None and decay is not None and n - 1 + decay >= -1:
        raise DivergentIntegralError(
            f"declared decay r^{decay} is not integrable against r^{n - 1} at infinity")
    m = start
    prev = RadialRule(m, scale, radius).integrate(f, n)
    while m < max_order:
        m *= 2
        cur = RadialRule(m, scale, radius).integrate(f, n)
        err = abs(cur - prev)
        if err <= tol * abs(cur) or cur == 0.0:
            return float(cur), float(err)
        prev = cur
    raise RuntimeError(f"radial rule did not converge (last change {err:.3e}, value {cur:.6e})")


class CylindricalRule:
    """Quadrature for integrands with a planar symmetry.

    ``dim=3``: the integrand is a function of ``(x1, x2, rho)``, ``rho`` being
    the distance to the ``(x1, x2)`` plane; measure ``omega_{n-3} rho^{n-3}``.
    Anchors are points of the plane.

    ``dim=2``: the integrand is a function of ``(a, b)``, ``a`` the coordinate
    along a line and ``b`` the distance to it; measure ``omega_{n-2} b^{n-2}``.
    Anchors are positions on the line.

    The domain is split by a smooth partition of unity
    ``w_j ~ <(x - A_j)/L>^{-m}``; each piece is integrated in polar/spherical
    coordinates around its anchor with a tan-mapped radial rule, so every
    bubble-like peak is resolved in its own radial coordinate.
    """

    def __init__(self, n, anchors, dim=3, order_r=64, order_ang=32, scale=1.0, pou_power=None):
        if dim not in (2, 3):
            raise ValueError("dim must be 2 or 3")
        if n < dim:
            raise ValueError(f"dimension n={n} too small for a {dim}-D reduction")
        self.n, self.dim = int(n), dim
        anchors = np.asarray(anchors, dtype=float)
        if dim == 2:
            anchors = anchors.reshape(-1)
            anchors = np.stack([anchors, np.zeros_like(anchors)], axis=1)
        else:
            anchors = anchors.reshape(-1, 2)
            anchors = np.concatenate([anchors, np.zeros((len(anchors), 1))], axis=1)
        self.anchors = anchors
        self.order_r, self.order_ang, self.scale = int(order_r), int(order_ang), float(scale)
        self.pou_power = 2 * n if pou_power is None else pou_power
        self._local = self._local_rule()

    def _local_rule(self):
        n, L = self.n, self.scale
        rad = RadialRule(self.order_r, L)
        r, wr = rad.nodes, rad.weights
        if self.dim == 2:
            x, w = _gl(self.order_ang)
            phi = 0.5 * (x + 1.0) * np.pi
            wphi = 0.5 * w * np.pi
            R, P = np.meshgrid(r, phi, indexing="ij")
            W = np.outer(wr, wphi)
            off = np.stack([R * np.cos(P), R * np.sin(P)], axis=-1)
            # b^{n-2} db da = R^{n-1} sin^{n-2}(phi) dR dphi
            W = W * sphere_area(n - 2) * R ** (n - 1) * np.sin(P) ** (n - 2)
        else:
            x, w = _gl(self.order_ang)
            psi = 0.5 * (x + 1.0) * (np.pi / 2)
            wpsi = 0.5 * w * (np.pi / 2)
            m_phi = 2 * self.order_ang
            phi = 2 * np.pi * np.arange(m_phi) / m_phi
            wphi = np.full(m_phi, 2 * np.pi / m_phi)
            R, S, P = np.meshgrid(r, psi, phi, indexing="ij")
            W = wr[:, None, None] * wpsi[None, :, None] * wphi[None, None, :]
            off = np.stack([R * np.sin(S) * np.cos(P), R * np.sin(S) * np.sin(P),
                            R * np.cos(S)], axis=-1)
            # rho^{n-3} dx1 dx2 drho = R^{n-1} sin(psi) cos^{n-3}(psi) dR dpsi dphi
            W = W * sphere_area(n - 3) * R ** (n - 1) * np.sin(S) * np.cos(S) ** (n - 3)
        return off.reshape(-1, self.dim), W.reshape(-1)

    def pieces(self):
        """Yield ``(coords, weights)`` per anchor; coords have shape ``(N, dim)``."""
        off, W = self._local
        A = self.anchors
        for j in range(len(A)):
            pts = A[j] + off
            d2 = np.sum((pts[:, None, :-1] - A[None, :, :-1]) ** 2, axis=-1) + pts[:, -1:] ** 2
            logw = -0.5 * self.pou_power * np.log1p(d2 / self.scale ** 2)
            logw -= logw.max(axis=1, keepdims=True)
            part = np.exp(logw[:, j]) / np.exp(logw).sum(axis=1)
            yield pts, W * part

    def embed(self, coords):
        """Lift reduced coordinates to points of ``R^n`` (zero padding)."""
        coords = np.asarray(coords)
        out = np.zeros(coords.shape[:-1] + (self.n,))
        out[..., :self.dim] = coords
        return out

    def integrate(self, F):
        return float(sum(np.sum(w * np.asarray(F(c))) for c, w in self.pieces()))

    def refined(self):
        return CylindricalRule(self.n, self.anchors[:, 0] if self.dim == 2 else self.anchors[:, :2],
                               self.dim, 2 * self.order_r, 2 * self.order_ang, self.scale,
                               self.pou_power)

    def coarsened(self):
        return CylindricalRule(self.n, self.anchors[:, 0] if self.dim == 2 else self.anchors[:, :2],
                               self.dim, max(8, self.order_r // 2), max(6, self.order_ang // 2),
                               self.scale, self.pou_power)


def reduced_integral(F, rule, decay=None):
    """Integral of a planar-symmetric integrand with an error estimate.

    ``F`` receives reduced coordinates.  The error estimate is the change
    against a rule with halved orders.  ``decay`` declares ``F ~ |x|^decay``
    at infinity and rejects divergent integrands.  The rules map the radial
    variable onto ``(0, inf)``, so there is no truncation tail.
    """
    if decay is not None and rule.n + decay >= 0:
        raise DivergentIntegralError(f"declared decay |x|^{decay} is not integrable in R^{rule.n}")
    val = rule.integrate(F)
    coarse = rule.coarsened().integrate(F)
    return val, abs(val - coarse)


@dataclass
class MCEstimate:
    mean: object
    stderr: object
    n_samples: int
    seed: int
    n_batches: int = 16
    mode: str = "uniform"
    batch_means: np.ndarray = field(default=None, repr=False)

    def to_dict(self):
        def conv(v):
            return v.tolist() if isinstance(v, np.ndarray) else float(v)
        return {"mean": conv(self.mean), "stderr": conv(self.stderr), "n_samples": self.n_samples,
                "seed": self.seed, "n_batches": self.n_batches, "mode": self.mode}

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True)


def _stream(seed, batch):
    key = np.array([int(seed) % 2 ** 64, int(batch)], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def ball_samples(n, radius, seed, n_samples, mode="radial", antithetic=True, n_batches=16,
                 radial_order=48, radial_scale=1.0):
    """Sample offsets from a ball center, batch by batch.

    Yields ``(offsets, weights)`` with offsets of shape ``(m, q, n)`` and
    weights ``(m, q)``: ``sum_q weights * f(center + offsets)`` is an unbiased
    estimate of the ball integral for each of the ``m`` samples of the batch.

    ``mode="uniform"``: points uniform in the ball (``q = 1``).
    ``mode="radial"``: random directions with a Gauss-Legendre rule along each
    ray, so only the angular variable is sampled.

    Batch ``b`` draws from ``Philox(key=(seed, b))``; the stream does not
    depend on the center, so reusing a seed gives common random numbers.
    """
    if n_samples % n_batches:
        raise ValueError("n_samples must be a multiple of n_batches")
    per = n_samples // n_batches
    if antithetic and per % 2:
        raise ValueError("antithetic sampling needs an even batch size")
    if mode == "radial":
        rule = RadialRule(radial_order, radial_scale, None if np.isinf(radius) else radius)
        r, wr = rule.nodes, rule.weights * sphere_area(n - 1) * rule.nodes ** (n - 1)
    elif mode == "uniform":
        if np.isinf(radius):
            raise ValueError("uniform sampling needs a finite radius")
        vol = ball_volume(n, radius)
    else:
        raise ValueError(f"unknown mode {mode!r}")
    for b in range(n_batches):
        g = _stream(seed, b)
        m = per // 2 if antithetic else per
        th = g.standard_normal((m, n))
        th /= np.linalg.norm(th, axis=1, keepdims=True)
        if mode == "uniform":
            rad = radius * g.random(m) ** (1.0 / n)
            off = th * rad[:, None]
            if antithetic:
                off = np.concatenate([off, -off])
            yield off[:, None, :], np.full((len(off), 1), vol)
        else:
            if antithetic:
                th = np.concatenate([th, -th])
            off = th[:, None, :] * r[None, :, None]
            yield off, np.broadcast_to(wr, (len(th), len(r)))


def per_ball_mc(integrand, center, radius, n, seed, n_samples, mode="radial", antithetic=True,
                n_batches=16, radial_order=48, radial_scale=1.0):
    """Monte Carlo estimate of ``int_{B(center, radius)} integrand``.

    ``integrand`` maps points ``(N, n)`` to values ``(N,)`` or ``(N, ...)``.
    Standard error from the spread of ``n_batches`` batch means.
    """
    if n_batches < 16:
        raise ValueError("at least 16 batches are required for the standard error")
    center = np.asarray(center, dtype=float)
    means = []
    for off, w in ball_samples(n, radius, seed, n_samples, mode, antithetic, n_batches,
                               radial_order, radial_scale):
        m, q = w.shape
        vals = np.asarray(integrand((center + off).reshape(m * q, n)))
        vals = vals.reshape((m, q) + vals.shape[1:])
        wexp = w.reshape((m, q) + (1,) * (vals.ndim - 2))
        means.append(np.sum(vals * wexp, axis=1).mean(axis=0))
    means = np.array(means)
    mean = means.mean(axis=0)
    se = means.std(axis=0, ddof=1) / np.sqrt(n_batches)
    if np.ndim(mean) == 0:
        mean, se = float(mean), float(se)
    return MCEstimate(mean, se, n_samples, int(seed), n_batches, mode, means)


def _log_quad(g, a, b):
    """``int_a^b g(r) dr`` (``b`` may be inf) via ``r = e^u`` beyond 1."""
    total, err = 0.0, 0.0
    if a < 1.0:
        v, e = sint.quad(g, a, min(b, 1.0), limit=200, epsabs=0.0, epsrel=1e-12)
        total, err = total + v, err + e
    lo = max(a, 1.0)
    if b > lo:
        hu = np.inf if np.isinf(b) else np.log(b)
        def gu(u):
            r = np.exp(u)
            v = g(r) * r if np.isfinite(r) else 0.0
            return v if np.isfinite(v) else 0.0
        v, e = sint.quad(gu, np.log(lo), hu, limit=400, epsabs=0.0, epsrel=1e-12)
        total, err = total + v, err + e
    return total, err


def newtonian_radial(f, n, y, decay=None):
    """``int |x - y|^{2-n} f(|x|) dx`` for a radial profile ``f`` and ``|y| = y``.

    Spherical means of the kernel give
    ``omega_{n-1} (y^{2-n} int_0^y f r^{n-1} dr + int_y^inf f r dr)``, so that
    ``-Laplacian`` of the result is ``(n-2) omega_{n-1} f``.  ``decay`` declares
    ``f ~ r^decay``; the potential needs ``decay < -2``.
    """
    if decay is not None and decay >= -2:
        raise DivergentIntegralError(f"Newtonian potential of r^{decay} diverges")
    y = float(y)
    with np.errstate(over="ignore"):
        outer, _ = _log_quad(lambda r: f(r) * r, y, np.inf)
        inner = 0.0
        if y > 0:
            inner, _ = _log_quad(lambda r: f(r) * r ** (n - 1), 0.0, y)
            inner *= y ** (2 - n)
    val = sphere_area(n - 1) * (inner + outer)
    if not np.isfinite(val):
        raise DivergentIntegralError("Newtonian potential integral diverges")
    return float(val)
