"""Multi-center weights, weighted norms and sampled certificates of the weight lemmas.

Sup norms over ``R^n`` are replaced by maxima over structured probe sets:
rays through every center at dyadic radii, midpoints of neighbouring
centers, the symmetry axis and a far-field shell.  Every certificate keeps
its probe count and seed so a failure can be replayed.
"""
from dataclasses import asdict, dataclass, field
import json
import math

import numpy as np

from .quadrature import DivergentIntegralError, newtonian_radial

__all__ = [
    "bracket", "gamma", "weight_sum", "dist_min", "WeightContext", "SampleSet",
    "structured_samples", "RatioCertificate", "weighted_norm", "NormEstimate",
    "certify_step_lemma", "certify_interaction", "certify_two_point", "calibrate_interaction",
    "verify_interaction", "newtonian_decay", "holder_seminorm", "holder_toolbox_check",
    "CALIBRATION_GRID", "VERIFICATION_GRID", "embedding_ratios", "embedding_check",
]

CALIBRATION_GRID = {"k": (4, 8, 16), "r_over_k": (2, 8, 32), "seed": 0}
VERIFICATION_GRID = {"k": (6, 12, 24), "r_over_k": (4, 16, 64), "seed": 1}


def _centers(lat):
    return np.asarray(getattr(lat, "centers", lat), dtype=float)


def bracket(x):
    """``<x> = (1 + |x|^2)^{1/2}`` over the last axis."""
    x = np.asarray(x, dtype=float)
    return np.sqrt(1.0 + np.sum(x * x, axis=-1))


def gamma(rho, k, r):
    """Step weight: 1 up to ``r/k``, ``j+1`` on ``(j r/k, (j+1) r/k]``, ``[k/2]+1`` past ``r/2``."""
    rho = np.asarray(rho, dtype=float)
    if np.any(rho <= 0):
        raise ValueError("gamma needs rho > 0")
    top = k // 2 + 1
    g = np.clip(np.ceil(rho * k / r), 1, top)
    g = np.where(rho > r / 2, top, g)
    return g.astype(int) if g.ndim else int(g)


def _brackets(x, lat):
    P = _centers(lat)
    x = np.asarray(x, dtype=float)
    return bracket(x[..., None, :] - P)


def weight_sum(x, s, lat):
    """``sum_j <x - P^j>^{-s}``."""
    if not np.isfinite(s):
        raise ValueError("s must be finite")
    return np.sum(_brackets(x, lat) ** (-s), axis=-1)


def dist_min(x, lat):
    """``d(x) = min_j <x - P^j>`` (always >= 1)."""
    return np.min(_brackets(x, lat), axis=-1)


@dataclass
class WeightContext:
    lattice: object
    s: float
    l: int = 0
    alpha: float = 0.5
    tau: float = None

    def __post_init__(self):
        if not self.s > 0:
            raise ValueError(f"s must be positive (got {self.s})")
        if not 0 < self.alpha < 1:
            raise ValueError(f"alpha must lie in (0, 1) (got {self.alpha})")
        if self.tau is not None and not self.s >= 1 + self.tau:
            raise ValueError(f"step lemma needs s >= 1 + tau (s={self.s}, tau={self.tau})")


@dataclass
class SampleSet:
    points: np.ndarray
    recipe: str
    seed: int
    tags: np.ndarray = field(default=None, repr=False)

    def __len__(self):
        return len(self.points)


def structured_samples(lat, seed=0, n_random_dirs=2, n_shell=32):
    """Probe points for sup-norm surrogates.

    Per center: rays (outward, inward, tangential and ``n_random_dirs`` seeded
    random directions) at radii ``2^m``, ``m = -2 .. ceil(log2(4 r))``; the
    centers themselves; midpoints of consecutive centers; points on the axis
    orthogonal to the lattice plane; a shell ``|x| = 8 r``.
    """
    P = _centers(lat)
    k, n = P.shape
    r = float(getattr(lat, "r", np.max(np.linalg.norm(P, axis=1)) or 1.0))
    g = np.random.default_rng([int(seed), k, n])
    radii = 2.0 ** np.arange(-2, int(math.ceil(math.log2(4 * r))) + 1)
    pts, tags = [P.copy()], [np.zeros(k, int)]
    rand = g.standard_normal((n_random_dirs, n))
    rand /= np.linalg.norm(rand, axis=1, keepdims=True)
    for j in range(k):
        out = P[j] / max(np.linalg.norm(P[j]), 1e-300)
        tang = np.zeros(n)
        tang[0], tang[1] = -out[1], out[0]
        dirs = np.vstack([out, -out, tang, rand])
        pts.append((P[j] + radii[:, None, None] * dirs[None]).reshape(-1, n))
        tags.append(np.ones(len(radii) * len(dirs), int))
    if k > 1:
        mids = 0.5 * (P + np.roll(P, -1, axis=0))
        pts.append(mids)
        tags.append(np.full(k, 2))
    if n >= 3:
        ax = np.zeros((len(radii) + 1, n))
        ax[1:, 2] = radii * r
        pts.append(ax)
        tags.append(np.full(len(ax), 3))
    sh = g.standard_normal((n_shell, n))
    sh = 8 * r * sh / np.linalg.norm(sh, axis=1, keepdims=True)
    pts.append(sh)
    tags.append(np.full(n_shell, 4))
    return SampleSet(np.concatenate(pts), "rays+mid+axis+shell", int(seed), np.concatenate(tags))


@dataclass
class RatioCertificate:
    lemma: str
    params: dict
    min_ratio: float
    max_ratio: float
    argmin: list
    argmax: list
    n_probes: int
    seed: int
    passed: bool = True

    @property
    def band(self):
        return self.max_ratio / self.min_ratio if self.min_ratio > 0 else math.inf

    @property
    def constant(self):
        """Smallest ``C`` with all ratios in ``[1/C, C]``."""
        lo = 1.0 / self.min_ratio if self.min_ratio > 0 else math.inf
        return max(self.max_ratio, lo)

    def to_dict(self):
        d = asdict(self)
        d["band"] = self.band
        return d

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True)


def _cert(lemma, params, ratios, pts, seed, passed=True):
    ratios = np.asarray(ratios, dtype=float)
    if not np.all(np.isfinite(ratios)):
        raise FloatingPointError(f"{lemma}: non-finite ratio")
    i, j = int(np.argmin(ratios)), int(np.argmax(ratios))
    return RatioCertificate(lemma, params, float(ratios[i]), float(ratios[j]), pts[i].tolist(),
                            pts[j].tolist(), len(ratios), int(seed), bool(passed))


# ---------------------------------------------------------------- step lemma

def _step_ratio(x, s, lat):
    d = dist_min(x, lat)
    return weight_sum(x, s, lat) / (gamma(d, lat.k, lat.r) * d ** (-s))


def certify_step_lemma(n, k_list, r_over_k, s, seed=0, tau=None, r_list=None):
    """Ratio ``sum <x-P>^{-s} / (gamma(d) d^{-s})`` over probes, one certificate per ``(k, r)``.

    ``r`` is ``r_over_k * k`` unless ``r_list`` is given.  Returns
    ``(certificates, summary)``; the summary holds the per-cell constants and
    whether they stay within a factor 2 of each other.
    """
    from .perturbation import make_lattice
    if tau is not None and s < 1 + tau:
        raise ValueError(f"step lemma needs s >= 1 + tau (s={s}, tau={tau})")
    certs = []
    for k in k_list:
        rs = r_list if r_list is not None else [q * k for q in r_over_k]
        for r in rs:
            lat = make_lattice(n, int(k), float(r))
            S = structured_samples(lat, seed)
            ratio = _step_ratio(S.points, s, lat)
            certs.append(_cert("step", {"n": n, "k": int(k), "r": float(r), "s": float(s)},
                               ratio, S.points, seed))
    Cs = [c.constant for c in certs]
    summary = {"constants": Cs, "C_max": max(Cs), "C_min": min(Cs),
               "drift": max(Cs) / min(Cs), "stable": max(Cs) / min(Cs) < 2.0,
               "max_band": max(c.band for c in certs)}
    return certs, summary


# ---------------------------------------------------------------- interaction lemmas

def _interaction_ratios(x, lat, s1, s2, tau, sharp=False):
    B = _brackets(x, lat)
    k, r = lat.k, lat.r
    pre = (k / r) ** tau * (1.0 if sharp else k)
    d = B.min(axis=-1)
    out = {}
    for name, s in (("eqn1_s1", s1), ("eqn1_s2", s2)):
        lhs = np.sum(B ** (-s), axis=-1) - d ** (-s)
        out[name] = lhs / (pre * d ** (-s + tau))
    lhs = np.sum(B ** (-s1), axis=-1) * np.sum(B ** (-s2), axis=-1) - np.sum(B ** (-s1 - s2), axis=-1)
    out["eqn2"] = lhs / (pre * np.sum(B ** (-s1 - s2 + tau), axis=-1))
    return out


def _probe_points(lat, seed, n_random=256):
    S = structured_samples(lat, seed)
    g = np.random.default_rng([int(seed), 11, lat.k])
    P = lat.centers
    j = g.integers(0, lat.k, n_random)
    scale = np.exp(g.uniform(np.log(0.25), np.log(4 * lat.r), n_random))
    dvec = g.standard_normal((n_random, lat.n))
    dvec /= np.linalg.norm(dvec, axis=1, keepdims=True)
    return np.concatenate([S.points, P[j] + scale[:, None] * dvec])


def certify_interaction(k, r, s1, s2, tau, n=5, seed=0, C=None, sharp=False):
    """Max of ``LHS / RHS`` for both interaction inequalities (without the constant).

    With ``C`` given, ``passed`` records whether every ratio stays ``<= C``.
    ``k = 1`` gives identically zero left-hand sides.
    """
    from .perturbation import make_lattice
    if not 0 < tau <= min(s1, s2):
        raise ValueError(f"need 0 < tau <= min(s1, s2) (tau={tau})")
    lat = make_lattice(n, int(k), float(r))
    pts = _probe_points(lat, seed)
    certs = []
    for name, ratio in _interaction_ratios(pts, lat, s1, s2, tau, sharp).items():
        ok = True if C is None else bool(np.max(ratio) <= C)
        params = {"n": n, "k": int(k), "r": float(r), "s1": s1, "s2": s2, "tau": tau,
                  "sharp": sharp, "C": C}
        certs.append(_cert(f"interaction_{name}", params, ratio, pts, seed, ok))
    return certs


def certify_two_point(P1, P2, a, b, tau, n_probes=1000, seed=0, C=None):
    """``<x-P1>^{-a} <x-P2>^{-b} / (|P1-P2|^{-tau} (<x-P1>^{-a-b+tau} + <x-P2>^{-a-b+tau}))``."""
    if not 0 < tau <= min(a, b):
        raise ValueError(f"need 0 < tau <= min(a, b) (tau={tau})")
    P1, P2 = np.asarray(P1, float), np.asarray(P2, float)
    D = float(np.linalg.norm(P2 - P1))
    if D == 0:
        raise ValueError("points must be distinct")
    n = len(P1)
    g = np.random.default_rng([int(seed), 13])
    base = np.where(g.random(n_probes)[:, None] < 0.5, P1, P2)
    rad = np.exp(g.uniform(np.log(1e-2), np.log(10 * D + 10), n_probes))
    dvec = g.standard_normal((n_probes, n))
    dvec /= np.linalg.norm(dvec, axis=1, keepdims=True)
    x = base + rad[:, None] * dvec
    b1, b2 = bracket(x - P1), bracket(x - P2)
    ratio = b1 ** (-a) * b2 ** (-b) / (D ** (-tau) * (b1 ** (-a - b + tau) + b2 ** (-a - b + tau)))
    ok = True if C is None else bool(np.max(ratio) <= C)
    return _cert("two_point", {"a": a, "b": b, "tau": tau, "distance": D, "C": C}, ratio, x, seed, ok)


def _grid_max(n, grid, s1, s2, tau, C=None, sharp=False):
    certs = []
    for k in grid["k"]:
        for q in grid["r_over_k"]:
            certs += certify_interaction(k, q * k, s1, s2, tau, n, grid["seed"], C, sharp)
    return certs


def calibrate_interaction(n, s1, s2, tau, grid=CALIBRATION_GRID, safety=2.0, sharp=False):
    """Frozen constants per inequality: ``safety`` times the max ratio on the calibration grid."""
    certs = _grid_max(n, grid, s1, s2, tau, sharp=sharp)
    frozen = {}
    for c in certs:
        frozen[c.lemma] = max(frozen.get(c.lemma, 0.0), safety * c.max_ratio)
    return frozen, certs


def verify_interaction(n, s1, s2, tau, frozen, grid=VERIFICATION_GRID, sharp=False):
    """Check every probe of the (disjoint) verification grid against the frozen constants."""
    certs = []
    for k in grid["k"]:
        for q in grid["r_over_k"]:
            for c in certify_interaction(k, q * k, s1, s2, tau, n, grid["seed"], sharp=sharp):
                c.params["C"] = frozen[c.lemma]
                c.passed = c.max_ratio <= frozen[c.lemma]
                certs.append(c)
    return certs, all(c.passed for c in certs)


# ---------------------------------------------------------------- Newtonian potential

def newtonian_decay(s, n, y_list):
    """``int <x>^{-s-2} |y-x|^{2-n} dx / <y>^{-s}`` for each ``|y|`` in ``y_list``."""
    if not 0 < s < n - 2:
        raise ValueError(f"need 0 < s < n-2 (s={s}, n={n})")
    f = lambda r: (1.0 + r * r) ** (-(s + 2) / 2)
    out = []
    for y in y_list:
        try:
            v = newtonian_radial(f, n, float(y))
        except DivergentIntegralError:
            raise
        out.append(v * (1.0 + float(y) ** 2) ** (s / 2))
    return out


# ---------------------------------------------------------------- weighted norm

def _pair_offsets(n, seed, seps=(1 / 4, 1 / 8, 1 / 64), per=(6, 5, 5)):
    """16 deterministic ``(offset, separation)`` pairs in units of ``d(x)``.

    Pair endpoints are ``x +- sep/2 * e`` so they stay inside ``B(x, d/2)``.
    """
    g = np.random.default_rng([int(seed), 17, n])
    out = []
    for sep, m in zip(seps, per):
        e = g.standard_normal((m, n))
        e /= np.linalg.norm(e, axis=1, keepdims=True)
        for v in e:
            out.append((0.5 * sep * v, sep))
    return out


@dataclass
class NormEstimate:
    value: float
    sup_parts: list
    holder_part: float
    argmax: list
    n_probes: int
    n_pairs: int
    seed: int

    def to_dict(self):
        return asdict(self)


def weighted_norm(f, ctx, samples, seed=0):
    """Sampled ``||f||_{X^{l,alpha}_{k,s}}`` (a lower bound of the true norm).

    ``f(x, order)`` returns ``[f, Df, ..., D^order f]`` at points ``x`` of
    shape ``(N, n)``, each with its tensor axes last.
    """
    lat, s, l, a = ctx.lattice, ctx.s, ctx.l, ctx.alpha
    x = samples.points if isinstance(samples, SampleSet) else np.asarray(samples, float)
    vals = f(x, l)
    parts, arg = [], None
    best = -1.0
    for i in range(l + 1):
        v = np.asarray(vals[i], float).reshape(len(x), -1)
        if not np.all(np.isfinite(v)):
            raise FloatingPointError("non-finite function values at probes")
        q = np.linalg.norm(v, axis=1) / weight_sum(x, s + i, lat)
        parts.append(float(q.max()))
        if q.max() > best:
            best, arg = float(q.max()), x[int(np.argmax(q))].tolist()
    d = dist_min(x, lat)
    pairs = _pair_offsets(lat.n if hasattr(lat, "n") else x.shape[1], seed)
    hq = np.zeros(len(x))
    for off, sep in pairs:
        p = x + off[None] * d[:, None]
        q = x - off[None] * d[:, None]
        vp = np.asarray(f(p, l)[l], float).reshape(len(x), -1)
        vq = np.asarray(f(q, l)[l], float).reshape(len(x), -1)
        hq = np.maximum(hq, np.linalg.norm(vp - vq, axis=1) / (sep * d) ** a)
    hw = hq / weight_sum(x, s + l + a, lat)
    return NormEstimate(float(sum(parts) + hw.max()), parts, float(hw.max()), arg, len(x),
                        len(pairs), int(seed))


# ---------------------------------------------------------------- Hoelder toolbox

def holder_seminorm(vals_p, vals_q, dist, alpha):
    """Sampled ``[u]_alpha``: max of ``|u(p) - u(q)| / |p - q|^alpha`` over the given pairs."""
    diff = np.abs(np.asarray(vals_p) - np.asarray(vals_q))
    if diff.ndim > 1:
        diff = np.linalg.norm(diff.reshape(len(diff), -1), axis=1)
    return float(np.max(diff / dist ** alpha, initial=0.0))


def _bump(g, n, R):
    c = g.uniform(-1.2, 1.2, n) * R
    w = R * np.exp(g.uniform(np.log(0.05), np.log(2.0)))
    A = g.uniform(-2, 2)

    def u(x, order=1):
        y = x - c
        e = A * np.exp(-np.sum(y * y, axis=-1) / w ** 2)
        return [e, (-2.0 / w ** 2) * e[:, None] * y][:order + 1]
    return u, c


def _ball_pairs(g, n, R, m):
    def pts(m):
        d = g.standard_normal((m, n))
        d /= np.linalg.norm(d, axis=1, keepdims=True)
        return d * (R * g.random(m) ** (1.0 / n))[:, None]
    p, q = pts(m), pts(m)
    # add close pairs so small separations are represented
    h = R * np.exp(g.uniform(np.log(1e-3), 0.0, m))[:, None]
    e = g.standard_normal((m, n))
    e /= np.linalg.norm(e, axis=1, keepdims=True)
    c = pts(m) * 0.5
    p = np.concatenate([p, c + 0.5 * h * e])
    q = np.concatenate([q, c - 0.5 * h * e])
    return p, q


def _toolbox_quantities(u, p, q, extra, alpha, beta, dR):
    dist = np.linalg.norm(p - q, axis=1)
    up, uq = u(p)[0], u(q)[0]
    allpts = np.concatenate([p, q, extra])
    U = u(allpts)
    sup_u = float(np.max(np.abs(U[0])))
    sup_du = float(np.max(np.linalg.norm(U[1], axis=1)))
    ha = holder_seminorm(up, uq, dist, alpha)
    hb = holder_seminorm(up, uq, dist, beta)
    i1 = dR ** (-alpha) * sup_u + dR ** (1 - alpha) * sup_du
    i2 = dR ** (-alpha) * sup_u + dR ** (beta - alpha) * hb
    return ha, i1, i2, (up, uq, dist, sup_u)


def holder_toolbox_check(n=5, R=1.0, trials=100, alpha=0.3, beta=0.7, delta=1.0, seed=0,
                         C=None, n_pairs=400):
    """Sampled checks of the Hoelder toolbox on random Gaussian bumps in ``B(0, R)``.

    Triangle and product rules are checked directly (they hold pairwise on a
    common pair set).  For the two interpolation inequalities the ratio
    ``[u]_alpha / RHS`` is returned; with ``C`` given, violations of
    ``ratio <= C`` are counted.  Sup norms use the pair endpoints plus the
    bump center when it lies in the ball.
    """
    g = np.random.default_rng([int(seed), 19, n])
    dR = delta * R
    worst = {"triangle": 0.0, "product": 0.0, "interp1": 0.0, "interp2": 0.0}
    viol = {"interp1": 0, "interp2": 0}
    for _ in range(trials):
        p, q = _ball_pairs(g, n, R, n_pairs)
        u, cu = _bump(g, n, R)
        v, cv = _bump(g, n, R)
        extra = np.array([c for c in (cu, cv) if np.linalg.norm(c) < R] or [np.zeros(n)])
        ha, i1, i2, (up, uq, dist, su) = _toolbox_quantities(u, p, q, extra, alpha, beta, dR)
        hv, _, _, (vp, vq, _, sv) = _toolbox_quantities(v, p, q, extra, alpha, beta, dR)
        hs = holder_seminorm(up + vp, uq + vq, dist, alpha)
        if ha + hv > 0:
            worst["triangle"] = max(worst["triangle"], hs / (ha + hv))
        hprod = holder_seminorm(up * vp, uq * vq, dist, alpha)
        rhs = su * hv + sv * ha
        if rhs > 0:
            worst["product"] = max(worst["product"], hprod / rhs)
        for name, den in (("interp1", i1), ("interp2", i2)):
            ratio = ha / den if den > 0 else 0.0
            worst[name] = max(worst[name], ratio)
            if C is not None and ratio > C:
                viol[name] += 1
    return {"worst": worst, "violations": viol, "C": C, "trials": trials, "seed": int(seed),
            "alpha": alpha, "beta": beta, "delta": delta, "n": n}


# ---------------------------------------------------------------- D^{1,2} embedding

def _multi_derivs(mb):
    from .bubbles import grad_u_multi, u_multi

    def f(x, order=1):
        out = [u_multi(x, mb)]
        if order >= 1:
            out.append(grad_u_multi(x, mb))
        return out[:order + 1]
    return f


def embedding_ratios(n, k, r, s=None, seed=0, alpha=0.5):
    """``||D u||_{L^2}`` for the lattice bubble sum against its sampled ``X^{1,alpha}_{k,s}`` norm.

    ``||D u||^2 = n(n-2) (k V1 + sum_{i != j} X_ij)`` exactly, with ``X_ij``
    from the two-center rule.  Two normalizations are returned: the stated
    one ``k (k/r)^{tau/2}`` and ``(k (1 + k (k/r)^tau))^{1/2}``, which keeps
    the diagonal ``i = j`` terms of the double sum.  ``tau = s - (n-2)/2``.
    """
    from .bubbles import MultiBubble
    from .energy import V1, interaction_energy
    from .perturbation import make_lattice
    s = n - 2.0 if s is None else float(s)
    tau = s - (n - 2) / 2
    if not tau > 0:
        raise ValueError(f"need s > (n-2)/2 (s={s}, n={n})")
    lat = make_lattice(n, int(k), float(r))
    mb = MultiBubble.on_lattice(lat, constrained=False)
    X = interaction_energy(mb)["cross_sum"] if k > 1 else 0.0
    lhs = math.sqrt(n * (n - 2) * (k * V1(n) + X))
    est = weighted_norm(_multi_derivs(mb), WeightContext(lat, s, 1, alpha),
                        structured_samples(lat, seed), seed)
    stated = k * (k / r) ** (tau / 2)
    kept = math.sqrt(k * (1.0 + k * (k / r) ** tau))
    return {"k": int(k), "r": float(r), "s": s, "tau": tau, "d12": lhs, "norm": est.value,
            "ratio_stated": lhs / (stated * est.value), "ratio_diagonal": lhs / (kept * est.value),
            "n_probes": est.n_probes, "seed": int(seed)}


def embedding_check(n, s=None, calibration=CALIBRATION_GRID, verification=VERIFICATION_GRID,
                    safety=2.0):
    """Freeze ``C`` (``safety`` x max ratio) on the calibration grid, then test the verification grid."""
    def grid(g):
        return [embedding_ratios(n, k, q * k, s, g["seed"]) for k in g["k"] for q in g["r_over_k"]]
    cal, ver = grid(calibration), grid(verification)
    out = {}
    for key in ("ratio_stated", "ratio_diagonal"):
        C = safety * max(row[key] for row in cal)
        worst = max(row[key] for row in ver)
        out[key] = {"C": C, "worst_verification": worst, "passed": worst <= C,
                    "failing": [(row["k"], row["r"]) for row in ver if row[key] > C]}
    return {"calibration": cal, "verification": ver, "summary": out}
