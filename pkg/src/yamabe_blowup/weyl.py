"""Algebraic Weyl forms and the polynomial perturbation field built from them.

A Weyl form is stored densely as an ``(n, n, n, n)`` array indexed
``(mu, alpha, nu, beta)``; the pairs are ``(mu, alpha)`` and ``(nu, beta)``.
"""
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

__all__ = [
    "WeylForm",
    "HField",
    "project_to_weyl",
    "canonical_weyl",
    "weyl_residuals",
    "nontriviality",
    "profile",
    "eval_H",
    "eval_H_grad",
    "eval_H_hess",
    "grad_sq",
    "hess_sq",
    "field_parts",
    "identity_residuals",
]


def _kulkarni_nomizu(h, k):
    # (h o k)_{abcd} = h_ac k_bd + h_bd k_ac - h_ad k_bc - h_bc k_ad
    return (np.einsum("ac,bd->abcd", h, k) + np.einsum("bd,ac->abcd", h, k)
            - np.einsum("ad,bc->abcd", h, k) - np.einsum("bc,ad->abcd", h, k))


def project_to_weyl(T, n=None):
    """Orthogonal (Frobenius) projection of a rank-4 array onto Weyl tensors.

    Steps: antisymmetrize each pair, symmetrize pair exchange, remove the
    totally antisymmetric (Bianchi-violating) part, subtract the Ricci and
    scalar traces via Kulkarni-Nomizu products.
    """
    T = np.asarray(T, dtype=float)
    if n is None:
        n = T.shape[0]
    if n < 4:
        raise ValueError(f"Weyl forms need n >= 4, got n={n}")
    if T.shape != (n, n, n, n):
        raise ValueError(f"expected shape {(n,) * 4}, got {T.shape}")
    if not np.all(np.isfinite(T)):
        raise ValueError("input tensor has non-finite entries")

    A = 0.25 * (T - T.transpose(1, 0, 2, 3) - T.transpose(0, 1, 3, 2)
                + T.transpose(1, 0, 3, 2))
    B = 0.5 * (A + A.transpose(2, 3, 0, 1))
    # cyclic sum over the last three slots; for B in this symmetry class
    # the totally antisymmetric part equals one third of it
    bianchi = B + B.transpose(0, 2, 3, 1) + B.transpose(0, 3, 1, 2)
    C = B - bianchi / 3.0

    g = np.eye(n)
    ric = np.einsum("mamb->ab", C)
    scal = np.trace(ric)
    W = (C - _kulkarni_nomizu(ric, g) / (n - 2)
         + scal / (2.0 * (n - 1) * (n - 2)) * _kulkarni_nomizu(g, g))
    return WeylForm(n, W)


def weyl_residuals(coeffs):
    """Max-norm residuals of the four symmetry families of a rank-4 array."""
    W = np.asarray(coeffs)
    pair = max(np.abs(W - W.transpose(2, 3, 0, 1)).max(),
               np.abs(W + W.transpose(1, 0, 2, 3)).max(),
               np.abs(W + W.transpose(0, 1, 3, 2)).max())
    bianchi = np.abs(W + W.transpose(0, 2, 3, 1) + W.transpose(0, 3, 1, 2)).max()
    trace = np.abs(np.einsum("mamb->ab", W)).max()
    return {"symmetry": float(pair), "bianchi": float(bianchi),
            "trace": float(trace), "nontriviality": float(nontriviality(W))}


def nontriviality(coeffs):
    W = np.asarray(coeffs)
    return float(np.sum((W + W.transpose(0, 3, 2, 1)) ** 2))


@dataclass(frozen=True, eq=False)
class WeylForm:
    n: int
    coeffs: np.ndarray = field(repr=False)

    def __post_init__(self):
        c = np.array(self.coeffs, dtype=float)
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)

    def residuals(self):
        return weyl_residuals(self.coeffs)

    @property
    def matrix(self):
        """``W`` reshaped to ``(mu*nu, alpha*beta)`` so that ``Q = M @ vec(x x^T)``."""
        cached = self.__dict__.get("_matrix")
        if cached is None:
            n = self.n
            dense = self.coeffs.transpose(0, 2, 1, 3).reshape(n * n, n * n)
            density = np.count_nonzero(dense) / dense.size
            cached = sp.csr_matrix(dense) if density < 0.1 else dense
            self.__dict__["_matrix"] = cached
        return cached

    @property
    def mixed(self):
        """``M[mu, nu, a, b] = W[mu, a, nu, b] + W[mu, b, nu, a]``, the Hessian of ``Q``."""
        cached = self.__dict__.get("_mixed")
        if cached is None:
            W = self.coeffs
            cached = W.transpose(0, 2, 1, 3) + W.transpose(0, 2, 3, 1)
            self.__dict__["_mixed"] = cached
        return cached

    def quad(self, x):
        """``Q[..., mu, nu] = W[mu, a, nu, b] x_a x_b`` for points of shape (..., n)."""
        x = np.asarray(x, dtype=float)
        flat = x.reshape(-1, self.n)
        xx = (flat[:, :, None] * flat[:, None, :]).reshape(len(flat), -1)
        Q = (self.matrix @ xx.T).T
        return np.asarray(Q).reshape(x.shape[:-1] + (self.n, self.n))

    def quad_grad(self, x):
        """``dQ[..., a, mu, nu] = d_a Q_{mu nu}(x)``."""
        x = np.asarray(x, dtype=float)
        return np.einsum("mnab,...b->...amn", self.mixed, x)

    def to_text(self):
        lines = [f"weylform n={self.n}"]
        for idx in zip(*np.nonzero(self.coeffs)):
            v = self.coeffs[idx]
            lines.append(" ".join(str(int(i)) for i in idx) + f" {v:.17g}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text):
        rows = [ln.split() for ln in text.strip().splitlines()]
        head = rows[0]
        if len(head) != 2 or head[0] != "weylform" or not head[1].startswith("n="):
            raise ValueError(f"bad weylform header: {' '.join(head)!r}")
        n = int(head[1][2:])
        W = np.zeros((n,) * 4)
        for r in rows[1:]:
            mu, a, nu, b = (int(v) for v in r[:4])
            W[mu, a, nu, b] = float(r[4])
        return cls(n, W)


def canonical_weyl(n):
    """Deterministic Weyl form from the seed ``omega (x) omega``.

    ``omega`` is the 2-form with ``omega_12 = omega_34 = 1`` (0-based slots
    0,1 and 2,3).
    """
    if n < 4:
        raise ValueError(f"Weyl forms need n >= 4, got n={n}")
    omega = np.zeros((n, n))
    omega[0, 1], omega[1, 0] = 1.0, -1.0
    omega[2, 3], omega[3, 2] = 1.0, -1.0
    seed = np.einsum("ma,nb->manb", omega, omega)
    return project_to_weyl(seed, n)


PROFILE_TAIL = (5.0, -1.0, 1.0 / 20.0)


def profile(rho, coeffs, deriv=0):
    """Evaluate the radial profile polynomial (in ``rho = |x|^2``) or a derivative.

    ``coeffs`` is either ``tau0`` (giving ``tau0 + 5 rho - rho^2 + rho^3/20``)
    or an explicit ascending coefficient sequence.
    """
    if np.ndim(coeffs) == 0:
        coeffs = (float(coeffs),) + PROFILE_TAIL
    c = np.polynomial.polynomial.polyder(np.asarray(coeffs, dtype=float), deriv)
    return np.polynomial.polynomial.polyval(np.asarray(rho, dtype=float), c)


@dataclass(frozen=True, eq=False)
class HField:
    """``H(x) = p(|x|^2) W[mu, a, nu, b] x_a x_b``.

    ``coeffs`` overrides the default profile ``(tau0, 5, -1, 1/20)``; it is
    used for the rescaled level fields of the glued series.
    """
    tau0: float
    W: WeylForm
    coeffs: tuple = None

    def __post_init__(self):
        if self.coeffs is None:
            object.__setattr__(self, "coeffs", (float(self.tau0),) + PROFILE_TAIL)

    @property
    def n(self):
        return self.W.n

    def with_tau0(self, tau0):
        return HField(float(tau0), self.W)


def _check_points(x):
    x = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(x)):
        raise ValueError("non-finite evaluation point")
    return x


def eval_H(H, x):
    """``H(x) = p(|x|^2) W[mu, a, nu, b] x_a x_b``; broadcasts over leading axes."""
    x = _check_points(x)
    rho = np.sum(x * x, axis=-1)
    return profile(rho, H.coeffs)[..., None, None] * H.W.quad(x)


def eval_H_grad(H, x):
    """``G[..., a, mu, nu] = d_a H_{mu nu}(x)``."""
    x = _check_points(x)
    rho = np.sum(x * x, axis=-1)
    Q = H.W.quad(x)
    dQ = H.W.quad_grad(x)
    p = profile(rho, H.coeffs)[..., None, None, None]
    dp = profile(rho, H.coeffs, 1)[..., None, None, None]
    return 2.0 * dp * x[..., :, None, None] * Q[..., None, :, :] + p * dQ


def eval_H_hess(H, x):
    """``D[..., a, b, mu, nu] = d_a d_b H_{mu nu}(x)``."""
    x = _check_points(x)
    n = H.n
    rho = np.sum(x * x, axis=-1)
    Q = H.W.quad(x)[..., None, None, :, :]
    dQ = H.W.quad_grad(x)
    p = profile(rho, H.coeffs)[..., None, None, None, None]
    dp = profile(rho, H.coeffs, 1)[..., None, None, None, None]
    d2p = profile(rho, H.coeffs, 2)[..., None, None, None, None]
    xa = x[..., :, None, None, None]
    xb = x[..., None, :, None, None]
    eye = np.eye(n)[:, :, None, None]
    cross = xa * dQ[..., None, :, :, :] + xb * dQ[..., :, None, :, :]
    M = H.W.mixed.transpose(2, 3, 0, 1)
    return 4.0 * d2p * xa * xb * Q + 2.0 * dp * eye * Q + 2.0 * dp * cross + p * M


def field_parts(H, x):
    """Scalar invariants of ``H`` at ``x``: ``rho, Q, |Q|^2, x^T T2 x, p, p', p''``.

    ``T2 = sum M_{mn a b} M_{mn a c}`` is the Gram matrix of the mixed form, so
    ``x^T T2 x = sum (d_a Q_{mu nu})^2``.
    """
    x = _check_points(x)
    rho = np.sum(x * x, axis=-1)
    Q = H.W.quad(x)
    return {"rho": rho, "Q": Q, "q4": np.sum(Q * Q, axis=(-2, -1)),
            "q2": np.einsum("...a,ab,...b->...", x, _dq_gram(H.W), x),
            "p": profile(rho, H.coeffs), "p1": profile(rho, H.coeffs, 1),
            "p2": profile(rho, H.coeffs, 2)}


def grad_sq_parts(d):
    return (4.0 * d["rho"] * d["p1"] ** 2 + 8.0 * d["p"] * d["p1"]) * d["q4"] + d["p"] ** 2 * d["q2"]


def hess_sq_parts(d, n, m2):
    rho, q4, q2, p, p1, p2 = (d[k] for k in ("rho", "q4", "q2", "p", "p1", "p2"))
    sq = (16 * p2 ** 2 * rho ** 2 * q4 + 4 * n * p1 ** 2 * q4
          + 4 * p1 ** 2 * (2 * rho * q2 + 8 * q4) + p ** 2 * m2)
    cross = (40 * p2 * p1 * rho * q4 + 8 * p * p2 * q4 + 16 * p1 ** 2 * q4
             + 4 * p * p1 * q2)
    return sq + 2 * cross


def grad_sq(H, x):
    """``sum (d_a H_{mu nu})^2`` via ``F(rho) |Q|^2 + p^2 |dQ|^2``.

    Uses Euler's identity ``x . grad Q = 2 Q``; independent of
    :func:`eval_H_grad` and only needs ``Q`` plus one quadratic form.
    """
    return grad_sq_parts(field_parts(H, x))


def hess_sq(H, x):
    """``sum (d_a d_b H_{mu nu})^2`` in closed form.

    Expands ``D^2 H = 4 p'' x x Q + 2 p' delta Q + 2 p' (x dQ + dQ x) + p D^2 Q``
    and contracts term by term with the Euler identities for ``Q``.
    """
    return hess_sq_parts(field_parts(H, x), H.n, float(np.sum(H.W.mixed ** 2)))


def _dq_gram(W):
    cached = W.__dict__.get("_dq_gram")
    if cached is None:
        M = W.mixed
        cached = np.einsum("mnab,mnac->bc", M, M)
        W.__dict__["_dq_gram"] = cached
    return cached


def identity_residuals(H, x, step=1e-4):
    """Relative residuals of ``tr H = 0``, ``H(x) x = 0`` and ``d_mu H_{mu nu} = 0`` at points ``x``.

    The divergence is evaluated twice: from :func:`eval_H_grad` and by
    second-order central differences of :func:`eval_H` with ``step``.  Each
    residual is the max over points of ``|residual| / scale``, where the scale
    is ``|H|`` (trace), ``|H| |x|`` (annihilation) or ``|DH|`` (divergence).
    """
    x = np.atleast_2d(_check_points(x))
    n = H.n
    h = eval_H(H, x)
    g = eval_H_grad(H, x)
    hn = np.linalg.norm(h.reshape(len(x), -1), axis=1)
    gn = np.linalg.norm(g.reshape(len(x), -1), axis=1)
    tr = np.abs(np.trace(h, axis1=-2, axis2=-1)) / hn
    ann = np.linalg.norm(np.einsum("imn,in->im", h, x), axis=1) / (hn * np.linalg.norm(x, axis=1))
    div_an = np.linalg.norm(np.einsum("immn->in", g), axis=1) / gn
    div_fd = np.zeros((len(x), n))
    for a in range(n):
        e = np.zeros(n)
        e[a] = step
        d = (eval_H(H, x + e) - eval_H(H, x - e)) / (2 * step)
        div_fd += d[:, a, :]
    div_fd = np.linalg.norm(div_fd, axis=1) / gn
    return {"trace": float(tr.max()), "annihilation": float(ann.max()),
            "divergence_analytic": float(div_an.max()), "divergence_fd": float(div_fd.max()),
            "n_points": len(x), "step": step}
