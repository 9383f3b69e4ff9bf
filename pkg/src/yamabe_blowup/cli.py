"""Command-line front end: one command per module suite plus ``certify-all``.

Parameters come from defaults, then an optional text config (``key = value``
per line, ``#`` comments), then ``--seed``.  The resolved parameters and the
package version are echoed at the top of every output, so a run can be
replayed from its own output.  Exit status: 0 if every enabled certificate
passes, 1 if some fail (their names go to stderr), 2 for usage or config
errors, 3 for numerical errors raised by a module.
"""
import argparse
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
import io
import json
import math
import os
import sys

import numpy as np

from . import __version__

EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_ERROR = 0, 1, 2, 3


class ConfigError(ValueError):
    def __init__(self, msg, line=None, key=None):
        where = []
        if line is not None:
            where.append(f"line {line}")
        if key is not None:
            where.append(f"field '{key}'")
        super().__init__(("config error" + (" (" + ", ".join(where) + ")" if where else "")
                          + ": " + msg))
        self.line, self.key = line, key


class UsageError(ValueError):
    pass


# ---------------------------------------------------------------- value parsers

def _int(s):
    return int(s)


def _float(s):
    v = float(s)
    if not math.isfinite(v):
        raise ValueError("must be finite")
    return v


def _ints(s):
    return tuple(int(v) for v in s.replace(" ", "").split(",") if v)


def _floats(s):
    return tuple(_float(v) for v in s.replace(" ", "").split(",") if v)


def _bool(s):
    low = s.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError("expected true/false")


def _auto_or(parse):
    def f(s):
        return "auto" if s.strip() == "auto" else parse(s)
    f.__name__ = f"auto|{parse.__name__.strip('_')}"
    return f


def _choice(*opts):
    def f(s):
        if s not in opts:
            raise ValueError(f"expected one of {', '.join(opts)}")
        return s
    f.__name__ = "|".join(opts)
    return f


def _fmt(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return f"{v:.17g}"
    if isinstance(v, tuple):
        return ",".join(_fmt(x) for x in v)
    return str(v)


# key: (parser, default)
SCHEMAS = {
    "verify-weyl": {"n": (_int, 25), "tol": (_float, 1e-12), "n_points": (_int, 100)},
    "certify-norms": {"n": (_int, 5), "k_list": (_ints, (4, 8, 16)), "r_list": (_floats, (8.0, 32.0)),
                      "r_over_k": (_floats, ()), "s": (_auto_or(_float), "auto"),
                      "s2": (_auto_or(_float), "auto"), "tau": (_float, 1.0),
                      "sharp": (_bool, True), "drift_limit": (_float, 2.0)},
    "tune-tau0": {"n": (_int, 25)},
    "reduced-energy": {"n": (_int, 25), "tau0": (_auto_or(_float), "auto"),
                       "lam_list": (_floats, (0.75, 0.8, 0.85, 0.9, 0.95, 1.0, 1.05, 1.1, 1.15, 1.2,
                                              1.25, 1.3)),
                       "hessian": (_choice("exact", "MC"), "exact"), "n_dirs": (_int, 16384)},
    "energy": {"n": (_int, 25), "c0": (_int, 1), "eps": (_float, 0.1), "k_list": (_ints, (25,)),
               "r_rule": (_auto_or(_float), "auto"), "t": (_auto_or(_float), "auto"),
               "tau0": (_auto_or(_float), "auto"), "n_samples": (_int, 256),
               "radial_order": (_int, 48), "order": (_int, 48), "check_admissible": (_bool, True)},
    "volume-scan": {"n": (_int, 6), "k_min": (_int, 2), "k_max": (_int, 12),
                    "r_over_k": (_float, 8.0), "order": (_int, 48), "slope_tol": (_float, 0.02)},
    "certify-all": {"criteria": (_ints, tuple(range(1, 14)))},
}
COMMON = {"seed": (_int, 0)}


@dataclass
class RunConfig:
    command: str
    params: dict = field(default_factory=dict)
    seed: int = 0

    def echo(self):
        """``key = value`` lines: version, command, seed and every resolved parameter."""
        lines = [f"version = {__version__}", f"command = {self.command}", f"seed = {self.seed}"]
        lines += [f"{k} = {_fmt(v)}" for k, v in sorted(self.params.items())]
        return lines

    def to_dict(self):
        d = {k: (list(v) if isinstance(v, tuple) else v) for k, v in self.params.items()}
        return {"version": __version__, "command": self.command, "seed": self.seed, "params": d}


def parse_config_text(text, command):
    """Parse ``key = value`` lines against the schema of ``command``."""
    schema = dict(SCHEMAS[command], **COMMON)
    out = {}
    for i, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"expected 'key = value', got {raw.strip()!r}", i)
        key, val = (p.strip() for p in line.split("=", 1))
        if key not in schema:
            raise ConfigError(f"unknown key for {command} (known: {', '.join(sorted(schema))})",
                              i, key)
        if key in out:
            raise ConfigError("duplicate key", i, key)
        parse = schema[key][0]
        try:
            out[key] = parse(val)
        except ValueError as e:
            raise ConfigError(f"cannot parse {val!r} as {parse.__name__.strip('_')}: {e}", i, key)
    return out


def resolve_config(command, text=None, seed=None):
    given = parse_config_text(text, command) if text else {}
    params = {k: given.get(k, d) for k, (_, d) in SCHEMAS[command].items()}
    s = given.get("seed", 0) if seed is None else seed
    if s < 0 or s >= 2 ** 64:
        raise ConfigError("seed must be an unsigned 64-bit integer", key="seed")
    return RunConfig(command, params, int(s))


# ---------------------------------------------------------------- output

def _csv(header, rows, cfg, trailer=()):
    buf = io.StringIO()
    for ln in cfg.echo():
        buf.write(f"# {ln}\n")
    buf.write(",".join(header) + "\n")
    for row in rows:
        buf.write(",".join(_fmt(float(v)) if isinstance(v, (float, np.floating)) else _fmt(v)
                           for v in row) + "\n")
    for k, v in trailer:
        buf.write(f"# {k} = {_fmt(v)}\n")
    return buf.getvalue()


def _json(payload, cfg):
    from .acceptance import _jsonable
    return json.dumps(_jsonable({"config": cfg.to_dict(), **payload}), sort_keys=True,
                      indent=2) + "\n"


def _flat(d, prefix=""):
    for k in sorted(d):
        v = d[k]
        key = f"{prefix}{k}"
        if isinstance(v, dict):
            yield from _flat(v, key + ".")
        elif isinstance(v, (list, tuple, np.ndarray)):
            yield key, ";".join(_fmt(float(x)) if isinstance(x, (float, np.floating)) else str(x)
                                for x in np.ravel(np.asarray(v, dtype=object)))
        else:
            yield key, v


@dataclass
class Outcome:
    json_payload: dict
    csv_text: str = None
    certificates: dict = field(default_factory=dict)

    @property
    def failing(self):
        return [k for k, v in self.certificates.items() if not v]


def _pmap(fn, items, workers):
    items = list(items)
    if workers <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, items))


# ---------------------------------------------------------------- commands

def cmd_verify_weyl(cfg, workers=1):
    from .weyl import HField, canonical_weyl, identity_residuals
    p = cfg.params
    n = p["n"]
    if n < 4:
        raise UsageError(f"n >= 4 required (got n={n})")
    W = canonical_weyl(n)
    res = W.residuals()
    g = np.random.default_rng([cfg.seed, 2, n])
    x = g.standard_normal((p["n_points"], n))
    x *= (2.0 * g.random(len(x)) ** (1.0 / n) / np.linalg.norm(x, axis=1))[:, None]
    ids = identity_residuals(HField(1.0, W), x)
    roundtrip = float(np.abs(type(W).from_text(W.to_text()).coeffs - W.coeffs).max())
    tol = p["tol"]
    certs = {"weyl_symmetry": res["symmetry"] < tol, "weyl_bianchi": res["bianchi"] < tol,
             "weyl_trace": res["trace"] < tol, "weyl_nontrivial": res["nontriviality"] > 0,
             "h_trace": ids["trace"] < 1e-10, "h_annihilation": ids["annihilation"] < 1e-10,
             "h_divergence": ids["divergence_analytic"] < 1e-10 and ids["divergence_fd"] < 1e-6,
             "text_roundtrip": roundtrip == 0.0}
    payload = {"residual_families": res, "h_identities": ids, "text_roundtrip_error": roundtrip,
               "certificates": certs}
    rows = [(k, v) for k, v in _flat({"residual_families": res, "h_identities": ids})]
    return Outcome(payload, _csv(("key", "value"), rows, cfg), certs)


def _norm_cell(args):
    from .weighted import certify_interaction, certify_step_lemma
    n, k, r, s, s2, tau, sharp, seed = args
    step, _ = certify_step_lemma(n, (k,), (), s, seed=seed, r_list=(r,))
    inter = certify_interaction(k, r, s, s2, tau, n=n, seed=seed, sharp=sharp) if k > 1 else []
    return step + inter


def cmd_certify_norms(cfg, workers=1):
    p = cfg.params
    n = p["n"]
    s = n / 2 if p["s"] == "auto" else p["s"]
    s2 = s + 1.0 if p["s2"] == "auto" else p["s2"]
    p["s"], p["s2"] = s, s2
    cells = []
    for k in p["k_list"]:
        rs = [q * k for q in p["r_over_k"]] if p["r_over_k"] else list(p["r_list"])
        cells += [(n, int(k), float(r), s, s2, p["tau"], p["sharp"], cfg.seed)
                  for r in rs]
    certs = [c for cell in _pmap(_norm_cell, cells, workers) for c in cell]
    rows, by_lemma = [], {}
    for c in certs:
        rows.append((c.lemma, c.params["k"], c.params["r"], c.params.get("s", c.params.get("s1")),
                     c.min_ratio, c.max_ratio, c.n_probes, c.seed))
        # step lemma is two-sided; the interaction bounds are one-sided (upper)
        const = c.constant if c.lemma == "step" else c.max_ratio
        by_lemma.setdefault(c.lemma, []).append(const)
    drift = {k: (max(v) / min(v) if min(v) > 0 else math.inf) for k, v in by_lemma.items()}
    certs_ok = {f"{k}_band_stability": d <= p["drift_limit"] for k, d in drift.items()}
    header = ("lemma", "k", "r", "s", "min_ratio", "max_ratio", "n_probes", "seed")
    trailer = [(f"drift[{k}]", v) for k, v in sorted(drift.items())]
    payload = {"certificates_by_cell": [c.to_dict() for c in certs], "drift": drift,
               "certificates": certs_ok}
    return Outcome(payload, _csv(header, rows, cfg, trailer), certs_ok)


def _field(n, tau0):
    from .weyl import HField, canonical_weyl
    return HField(0.0 if tau0 == "auto" else tau0, canonical_weyl(n))


def _check_reduced_n(n):
    if n < 4:
        raise UsageError(f"n >= 4 required (got n={n})")


def cmd_tune_tau0(cfg, workers=1):
    from .reduced import tune_tau0
    n = cfg.params["n"]
    _check_reduced_n(n)
    tr = tune_tau0(n, _field(n, "auto"))
    certs = {"tau0_certified": tr.certified()}
    d = tr.to_dict()
    payload = {"tuning": d, "certificates": certs}
    rows = [(k, v) for k, v in _flat({k: v for k, v in d.items() if k != "hessian"})]
    return Outcome(payload, _csv(("key", "value"), rows, cfg), certs)


def cmd_reduced_energy(cfg, workers=1):
    from .reduced import g_hat_exact, g_hat_hessian, tune_tau0
    p = cfg.params
    n = p["n"]
    _check_reduced_n(n)
    H = _field(n, p["tau0"])
    tuning = None
    if p["tau0"] == "auto":
        tuning = tune_tau0(n, H)
        H = H.with_tau0(tuning.tau0_star)
    prof = [(lam, g_hat_exact(H, lam), g_hat_exact(H, lam, 1)) for lam in p["lam_list"]]
    hr = g_hat_hessian(H, method=p["hessian"], seed=cfg.seed, n_dirs=p["n_dirs"])
    certs = {"hessian_positive": hr.certified()}
    payload = {"tau0": H.tau0, "tuning": tuning.to_dict() if tuning else None,
               "profile": [{"lam": a, "ghat": b, "dlam_ghat": c} for a, b, c in prof],
               "hessian": hr.to_dict(), "certificates": certs}
    trailer = [("tau0_resolved", H.tau0), ("hessian_method", hr.method),
               ("min_eigenvalue", hr.min_eigenvalue), ("min_eig_stderr", hr.min_eig_stderr),
               ("lam_lam", hr.lam_lam)]
    return Outcome(payload, _csv(("lam", "ghat", "dlam_ghat"), prof, cfg, trailer), certs)


def _energy_cell(args):
    from .bubbles import MultiBubble
    from .energy import energy_breakdown
    from .perturbation import canonical_lattice, make_lattice
    n, k, c0, eps, r_rule, t, H, seed, n_samples, radial_order, order = args
    if r_rule == "auto":
        lat = canonical_lattice(n, k, eps, c0)
        if t != "auto":
            lat = make_lattice(n, k, lat.r, t=t, eps=eps, c0=c0)
    else:
        lat = make_lattice(n, k, r_rule * k, t=None if t == "auto" else t, eps=eps, c0=c0)
    mb = MultiBubble.on_lattice(lat)
    return energy_breakdown(mb, lat, H, seed=seed, n_samples=n_samples, radial_order=radial_order,
                            order=order)


def cmd_energy(cfg, workers=1):
    from .energy import exponent_report, sweep_csv
    from .reduced import tune_tau0
    p = cfg.params
    n = p["n"]
    _check_reduced_n(n)
    H = _field(n, p["tau0"])
    if p["tau0"] == "auto":
        H = H.with_tau0(tune_tau0(n, H).tau0_star)
    cells = [(n, int(k), p["c0"], p["eps"], p["r_rule"], p["t"], H, cfg.seed, p["n_samples"],
              p["radial_order"], p["order"]) for k in p["k_list"]]
    bds = _pmap(_energy_cell, cells, workers)
    expo = exponent_report(n, p["c0"])
    certs = {f"structure_k{bd.k}": max(bd.structure[k] for k in ("trace", "annihilation",
                                                                    "divergence")) < 1e-9
             for bd in bds}
    if p["check_admissible"]:
        certs["exponents_admissible"] = bool(expo["admissible"])
    payload = {"tau0": H.tau0, "breakdowns": [bd.to_dict() for bd in bds], "exponents": expo,
               "certificates": certs}
    body = sweep_csv(bds)
    text = "".join(f"# {ln}\n" for ln in cfg.echo()) + f"# tau0_resolved = {H.tau0:.17g}\n" + body
    return Outcome(payload, text, certs)


def _volume_cell(args):
    from .bubbles import MultiBubble
    from .energy import volume
    from .perturbation import make_lattice
    n, k, q, order = args
    lat = make_lattice(n, k, q * k)
    v, e = volume(MultiBubble.on_lattice(lat, constrained=False), order, return_error=True)
    return (k, q * k, v, e)


def cmd_volume_scan(cfg, workers=1):
    from .energy import V1
    p = cfg.params
    n = p["n"]
    if n < 3:
        raise UsageError(f"n >= 3 required (got n={n})")
    ks = list(range(p["k_min"], p["k_max"] + 1))
    if len(ks) < 2:
        raise UsageError("need at least two values of k")
    rows = _pmap(_volume_cell, [(n, k, p["r_over_k"], p["order"]) for k in ks], workers)
    kk = np.array([r[0] for r in rows], float)
    vv = np.array([r[2] for r in rows])
    slope, icpt = (float(v) for v in np.polyfit(kk, vv, 1))
    rel = abs(slope / V1(n) - 1)
    certs = {"slope_matches_V1": rel < p["slope_tol"]}
    payload = {"rows": [dict(zip(("k", "r", "volume", "err"), r)) for r in rows], "slope": slope,
               "intercept": icpt, "V1": V1(n), "slope_rel_err": rel, "certificates": certs}
    trailer = [("slope", slope), ("intercept", icpt), ("V1", V1(n)), ("slope_rel_err", rel)]
    return Outcome(payload, _csv(("k", "r", "volume", "err"), rows, cfg, trailer), certs)


def _criterion_cell(args):
    from .acceptance import run_criterion
    k, seed = args
    return run_criterion(k, seed)


def cmd_certify_all(cfg, workers=1):
    from .acceptance import CRITERIA
    nums = cfg.params["criteria"]
    bad = [k for k in nums if k not in CRITERIA]
    if bad:
        raise UsageError(f"unknown criteria {bad} (valid 1..13)")
    res = _pmap(_criterion_cell, [(k, cfg.seed) for k in nums], workers)
    for r in res:
        print(r.line(), file=sys.stderr)
    certs = {f"criterion_{r.number}_{r.name}": r.passed for r in res}
    # wall-clock times vary run to run and stay out of the reproducible outputs
    payload = {"results": [dict(r.to_dict(), seconds=None) for r in res], "certificates": certs}
    rows = [(r.number, r.name, r.passed) for r in res]
    return Outcome(payload, _csv(("criterion", "name", "passed"), rows, cfg), certs)


COMMANDS = {
    "verify-weyl": (cmd_verify_weyl, "symmetry families of the canonical Weyl form and identities of H"),
    "certify-norms": (cmd_certify_norms, "sampled step and interaction lemma certificates over a (k, r) grid"),
    "tune-tau0": (cmd_tune_tau0, "tune tau0 so that d_lam G(0,1) = 0 with a positive Hessian"),
    "reduced-energy": (cmd_reduced_energy, "G(0, lam) profile and the Hessian at the base point"),
    "energy": (cmd_energy, "energy breakdown sweep in (mantissa, t_pow) form"),
    "volume-scan": (cmd_volume_scan, "volume of the k-bubble sum against k"),
    "certify-all": (cmd_certify_all, "run the full acceptance battery"),
}


# ---------------------------------------------------------------- entry point

def _add_common(ap, suppress):
    # subcommand copies use SUPPRESS so they do not overwrite options given before the command
    d = (lambda v: argparse.SUPPRESS) if suppress else (lambda v: v)
    ap.add_argument("--config", metavar="PATH", default=d(None),
                    help="text config, one 'key = value' per line")
    ap.add_argument("--seed", type=int, default=d(None), help="unsigned 64-bit seed (overrides config)")
    ap.add_argument("--workers", type=int, default=d(1),
                    help="process pool size (results do not depend on it)")
    ap.add_argument("--out", metavar="DIR", default=d(None),
                    help="write <command>.<format> into DIR instead of stdout")
    ap.add_argument("--format", choices=("json", "csv"), default=d("json"))


def build_parser():
    ap = argparse.ArgumentParser(prog="yamabe-blowup", description=__doc__.splitlines()[0])
    _add_common(ap, False)
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", metavar="COMMAND")
    sub.required = True
    for name, (_, help_) in COMMANDS.items():
        keys = ", ".join(f"{k} (default {_fmt(d)})" for k, (_, d) in SCHEMAS[name].items())
        sp = sub.add_parser(name, help=help_, description=f"{help_}. Config keys: {keys}, seed.")
        _add_common(sp, True)
    return ap


def main(argv=None):
    ap = build_parser()
    args = ap.parse_args(argv)
    if args.workers < 1:
        ap.error("--workers must be >= 1")
    try:
        text = None
        if args.config:
            try:
                with open(args.config) as fh:
                    text = fh.read()
            except OSError as e:
                raise ConfigError(f"cannot read {args.config}: {e.strerror}")
        cfg = resolve_config(args.command, text, args.seed)
        fn = COMMANDS[args.command][0]
        out = fn(cfg, workers=args.workers)
    except (ConfigError, UsageError) as e:
        print(f"{ap.prog} {args.command}: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (ValueError, RuntimeError, FloatingPointError, ArithmeticError) as e:
        mod = getattr(type(e), "__module__", "")
        print(f"{ap.prog} {args.command}: error in {mod}: {e}", file=sys.stderr)
        return EXIT_ERROR
    text = out.csv_text if args.format == "csv" else _json(out.json_payload, cfg)
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        path = os.path.join(args.out, f"{args.command}.{args.format}")
        with open(path, "w", newline="\n") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
        sys.stdout.flush()
    failing = out.failing
    if failing:
        print(f"FAIL: {len(failing)} certificate(s) failed: {', '.join(failing)}", file=sys.stderr)
        return EXIT_FAIL
    print(f"PASS: {len(out.certificates)} certificate(s)", file=sys.stderr)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
