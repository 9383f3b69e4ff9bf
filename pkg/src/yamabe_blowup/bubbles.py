"""Aubin-Talenti bubbles, multi-bubble sums and their tangent fields.

``sigma(x) = lam^a (1 + lam^2 |x - c|^2)^{-a}`` with ``a = (n-2)/2``.
All derivatives are closed forms.
"""
from dataclasses import dataclass, field

import numpy as np

from .quadrature import CylindricalRule, radial_integral

__all__ = [
    "Bubble", "MultiBubble", "sigma", "grad_sigma", "hess_sigma", "lap_sigma",
    "u_multi", "grad_u_multi", "Z_field", "grad_Z", "d12_inner", "linearized_kernel_residual",
    "pointwise_bubble_identity", "c_n",
]


def c_n(n):
    """Conformal Laplacian coefficient ``(n-2) / (4 (n-1))``."""
    return (n - 2) / (4.0 * (n - 1))


@dataclass(frozen=True, eq=False)
class Bubble:
    center: np.ndarray
    lam: float = 1.0

    def __post_init__(self):
        c = np.array(self.center, dtype=float)
        c.setflags(write=False)
        object.__setattr__(self, "center", c)
        if not self.lam > 0:
            raise ValueError(f"lam must be positive (got {self.lam})")

    @property
    def n(self):
        return len(self.center)


def _parts(x, b):
    y = np.asarray(x, dtype=float) - b.center
    rho = np.sum(y * y, axis=-1)
    return y, rho, 1.0 + b.lam ** 2 * rho


def sigma(x, b):
    n = b.n
    _, _, q = _parts(x, b)
    return b.lam ** ((n - 2) / 2) * q ** (-(n - 2) / 2)


def grad_sigma(x, b):
    n, lam = b.n, b.lam
    y, _, q = _parts(x, b)
    return (-(n - 2) * lam ** ((n + 2) / 2) * q ** (-n / 2))[..., None] * y


def hess_sigma(x, b):
    n, lam = b.n, b.lam
    y, _, q = _parts(x, b)
    c = -(n - 2) * lam ** ((n + 2) / 2)
    iso = (c * q ** (-n / 2))[..., None, None] * np.eye(n)
    out = (-n * lam ** 2 * c * q ** (-n / 2 - 1))[..., None, None] * (y[..., :, None] * y[..., None, :])
    return iso + out


def lap_sigma(x, b):
    """Closed-form Laplacian ``-n (n-2) lam^{(n+2)/2} q^{-(n+2)/2}``."""
    n, lam = b.n, b.lam
    _, _, q = _parts(x, b)
    return -n * (n - 2) * lam ** ((n + 2) / 2) * q ** (-(n + 2) / 2)


@dataclass(frozen=True, eq=False)
class MultiBubble:
    """Bubbles ``sigma_{P^j + xi^j, lam_j}`` on a lattice.

    ``constrained=True`` enforces ``3/4 < lam_j < 4/3`` and ``|xi^j| < 1/2``.
    ``centers`` may be given directly (``lattice=None``) for free-mode
    experiments.
    """
    base: np.ndarray
    xi: np.ndarray = None
    lam: np.ndarray = None
    constrained: bool = False
    lattice: object = field(default=None, repr=False)

    def __post_init__(self):
        P = np.atleast_2d(np.array(self.base, dtype=float))
        k, n = P.shape
        xi = np.zeros((k, n)) if self.xi is None else np.atleast_2d(np.array(self.xi, dtype=float))
        lam = np.ones(k) if self.lam is None else np.array(self.lam, dtype=float).reshape(k)
        if xi.shape != (k, n):
            raise ValueError(f"xi must have shape {(k, n)}")
        if np.any(lam <= 0):
            raise ValueError("all lam_j must be positive")
        if self.constrained:
            bad = [j for j in range(k) if not (0.75 < lam[j] < 4 / 3 and np.linalg.norm(xi[j]) < 0.5)]
            if bad:
                raise ValueError(f"bubbles {bad} violate 3/4 < lam < 4/3, |xi| < 1/2")
        for a in (P, xi, lam):
            a.setflags(write=False)
        object.__setattr__(self, "base", P)
        object.__setattr__(self, "xi", xi)
        object.__setattr__(self, "lam", lam)

    @classmethod
    def on_lattice(cls, lat, xi=None, lam=None, constrained=True):
        return cls(lat.centers, xi, lam, constrained, lat)

    @property
    def k(self):
        return len(self.base)

    @property
    def n(self):
        return self.base.shape[1]

    @property
    def centers(self):
        return self.base + self.xi

    def bubbles(self):
        return [Bubble(c, l) for c, l in zip(self.centers, self.lam)]

    def to_csv(self):
        n = self.n
        head = "j," + ",".join(f"xi{i + 1}" for i in range(n)) + ",lam"
        rows = [f"{j + 1}," + ",".join(f"{v:.17g}" for v in self.xi[j]) + f",{self.lam[j]:.17g}"
                for j in range(self.k)]
        return "\n".join([head] + rows) + "\n"

    @classmethod
    def from_csv(cls, text, base, constrained=False, lattice=None):
        lines = [ln for ln in text.strip().splitlines() if ln.strip()]
        rows = [ln.split(",") for ln in lines[1:]]
        rows.sort(key=lambda r: int(r[0]))
        xi = np.array([[float(v) for v in r[1:-1]] for r in rows])
        lam = np.array([float(r[-1]) for r in rows])
        return cls(base, xi, lam, constrained, lattice)


def u_multi(x, mb):
    return sum(sigma(x, b) for b in mb.bubbles())


def grad_u_multi(x, mb):
    return sum(grad_sigma(x, b) for b in mb.bubbles())


def _g_profile(b, rho):
    """``Z_mu = g(rho) y_mu`` with ``g = (n-2) lam^{(n+2)/2} q^{-n/2}``."""
    n, lam = b.n, b.lam
    q = 1.0 + lam ** 2 * rho
    return (n - 2) * lam ** ((n + 2) / 2) * q ** (-n / 2)


def Z_field(mb, j, mu, x):
    """``mu = 0``: ``d sigma_j / d lam``; ``mu >= 1``: ``d sigma_j / d xi_mu`` (1-based ``mu``)."""
    b = mb.bubbles()[j]
    n, lam = b.n, b.lam
    y, rho, q = _parts(x, b)
    if mu == 0:
        a = (n - 2) / 2
        return a * lam ** (a - 1) * q ** (-a - 1) * (1.0 - lam ** 2 * rho)
    return _g_profile(b, rho) * y[..., mu - 1]


def grad_Z(mb, j, mu, x):
    b = mb.bubbles()[j]
    n, lam = b.n, b.lam
    y, rho, q = _parts(x, b)
    if mu == 0:
        a = (n - 2) / 2
        # d/drho of a lam^{a-1} q^{-a-1} (1 - lam^2 rho), times 2 y
        f1 = a * lam ** (a - 1) * (-(a + 1) * lam ** 2 * q ** (-a - 2) * (1.0 - lam ** 2 * rho)
                                   - lam ** 2 * q ** (-a - 1))
        return (2 * f1)[..., None] * y
    g = _g_profile(b, rho)
    gp = -(n / 2) * lam ** 2 * g / q
    out = (2 * gp * y[..., mu - 1])[..., None] * y
    out[..., mu - 1] += g
    return out


def _radial_Z0_profiles(n, lam):
    a = (n - 2) / 2

    def f0p(r):
        q = 1.0 + lam ** 2 * r * r
        return 2 * r * a * lam ** (a - 1) * (-(a + 1) * lam ** 2 * q ** (-a - 2) * (1 - lam ** 2 * r * r)
                                             - lam ** 2 * q ** (-a - 1))
    return f0p


def d12_inner(mb, i_mu, j_nu, order=64, tol=1e-10):
    """``int DZ_{i,mu} . DZ_{j,nu}`` with ``mu, nu`` in ``0..n`` (0 is the lam direction).

    Same bubble: one-dimensional radial reduction.  Different bubbles: the
    integrand only sees the line through the two centers, so after averaging
    over the ``(n-2)``-sphere of directions orthogonal to it a 2-D rule in
    ``(a, b)`` suffices.  Returns ``(value, error_estimate)``.
    """
    (i, mu), (j, nu) = i_mu, j_nu
    bs = mb.bubbles()
    n = mb.n
    if i == j:
        b = bs[i]
        lam = b.lam
        if (mu == 0) != (nu == 0) or (mu != nu):
            return 0.0, 0.0
        if mu == 0:
            f0p = _radial_Z0_profiles(n, lam)
            return radial_integral(lambda r: f0p(r) ** 2, n, decay=-2 * (n - 1), scale=1.0 / lam,
                                   tol=tol)

        def integrand(r):
            rho = r * r
            g = _g_profile(b, rho)
            q = 1.0 + lam ** 2 * rho
            gp = -(n / 2) * lam ** 2 * g / q
            return g * g + (4 * g * gp * rho + 4 * gp * gp * rho * rho) / n
        return radial_integral(integrand, n, decay=-2 * n + 2, scale=1.0 / lam, tol=tol)

    bi, bj = bs[i], bs[j]
    D_vec = bj.center - bi.center
    D = float(np.linalg.norm(D_vec))
    u = D_vec / D
    Pp = np.eye(n) - np.outer(u, u)

    def F(c):
        a, bb = c[:, 0], c[:, 1]
        ri2 = a * a + bb * bb
        rj2 = (a - D) ** 2 + bb * bb
        dot = a * (a - D) + bb * bb          # y_i . y_j
        ai, aj = a, a - D

        def avg_outer(ca, cb, m, l):
            # average of y_{.,m} y_{.,l} over the (n-2)-sphere orthogonal to u
            return ca * cb * u[m] * u[l] + bb * bb * Pp[m, l] / (n - 1)

        if mu == 0 and nu == 0:
            fi = _radial_Z0_profiles(n, bi.lam)(np.sqrt(ri2)) / np.sqrt(ri2)
            fj = _radial_Z0_profiles(n, bj.lam)(np.sqrt(rj2)) / np.sqrt(rj2)
            return fi * fj * dot
        gi = _g_profile(bi, ri2)
        gj = _g_profile(bj, rj2)
        gpi = -(n / 2) * bi.lam ** 2 * gi / (1.0 + bi.lam ** 2 * ri2)
        gpj = -(n / 2) * bj.lam ** 2 * gj / (1.0 + bj.lam ** 2 * rj2)
        if mu == 0 or nu == 0:
            # DZ_0 (radial) . DZ_m ; orient so the radial one is "r" and the other "s"
            if mu == 0:
                fr = _radial_Z0_profiles(n, bi.lam)(np.sqrt(ri2)) / np.sqrt(ri2)
                g, gp, m = gj, gpj, nu - 1
                yr_m, ys_m = ai * u[m], aj * u[m]
            else:
                fr = _radial_Z0_profiles(n, bj.lam)(np.sqrt(rj2)) / np.sqrt(rj2)
                g, gp, m = gi, gpi, mu - 1
                yr_m, ys_m = aj * u[m], ai * u[m]
            # fr y_r . (g e_m + 2 gp y_{s,m} y_s) = fr (g y_{r,m} + 2 gp y_{s,m} (y_r . y_s))
            return fr * (g * yr_m + 2 * gp * ys_m * dot)
        m, l = mu - 1, nu - 1
        Oij = avg_outer(ai, aj, m, l)
        Ojj = avg_outer(aj, aj, m, l)
        Oii = avg_outer(ai, ai, m, l)
        delta = 1.0 if m == l else 0.0
        return (gi * gj * delta + 2 * gi * gpj * Ojj + 2 * gpi * gj * Oii
                + 4 * gpi * gpj * Oij * dot)

    scale = 1.0 / min(bi.lam, bj.lam)
    rule = CylindricalRule(n, [0.0, D], dim=2, order_r=order, order_ang=order // 2, scale=scale)
    val = rule.integrate(F)
    fine = rule.refined().integrate(F)
    return fine, abs(fine - val)


def linearized_kernel_residual(b, R, m, u=None):
    """Discrete ``-Delta u - n(n+2) sigma^{4/(n-2)} u`` on a radial mesh of ``[0, R]``.

    ``u`` defaults to the closed-form ``Z_0`` (``d sigma / d lam``); any radial
    profile ``u(r)`` can be passed.  Second-order central differences at the
    interior nodes ``r_i = i R / m``.  Returns
    ``(relative_residual, residual, r)`` where the relative residual is the
    ``L^2(R^n)`` norm of the residual over that of ``n(n+2) sigma^{4/(n-2)} u``
    (both on the mesh, measure ``r^{n-1} dr``).
    """
    n, lam = b.n, b.lam
    a = (n - 2) / 2
    if u is None:
        def u(r):
            return a * lam ** (a - 1) * (1 + lam ** 2 * r * r) ** (-a - 1) * (1 - lam ** 2 * r * r)
    r = np.linspace(0.0, R, m + 1)
    h = R / m
    v = u(r) * np.ones_like(r)
    ri = r[1:-1]
    lap = (v[2:] - 2 * v[1:-1] + v[:-2]) / h ** 2 + (n - 1) / ri * (v[2:] - v[:-2]) / (2 * h)
    pot = n * (n + 2) * (lam ** a * (1 + lam ** 2 * ri ** 2) ** (-a)) ** (4.0 / (n - 2))
    res = -lap - pot * v[1:-1]
    wts = ri ** (n - 1)
    denom = np.sqrt(np.sum(wts * (pot * v[1:-1]) ** 2))
    rel = np.sqrt(np.sum(wts * res ** 2)) / denom if denom > 0 else np.inf
    return float(rel), res, ri


def pointwise_bubble_identity(b, x, c=None):
    """``D sigma D sigma - c D^2(sigma^2) - (|D sigma|^2 - c Delta sigma^2) delta / n``.

    Vanishes identically for ``c = (n-2) / (4(n-1))``.
    """
    n = b.n
    c = c_n(n) if c is None else c
    s = sigma(x, b)
    g = grad_sigma(x, b)
    Hs = hess_sigma(x, b)
    gg = g[..., :, None] * g[..., None, :]
    d2s2 = 2 * gg + 2 * s[..., None, None] * Hs
    lap_s2 = 2 * np.sum(g * g, axis=-1) + 2 * s * lap_sigma(x, b)
    trace_part = (np.sum(g * g, axis=-1) - c * lap_s2)[..., None, None] * np.eye(n) / n
    return gg - c * d2s2 - trace_part
