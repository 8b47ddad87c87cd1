"""Command-line driver: ``sheppext --config run.yaml``.

A run config is a YAML mapping.  Unknown keys are fatal, every omitted key
takes the value from ``KEYS`` below, and the resolved config (including
which keys were defaulted) is echoed into the run manifest.
"""

from __future__ import annotations

import argparse
import math
import os
import sys
from dataclasses import dataclass, field
from importlib import resources

import numpy as np
import yaml

from . import asymptotics, experiments, pickands
from .errors import ConfigError, SheppError
from .fieldsim import SheppGrid
from .models import (
    Example21Field,
    fit_local_exponent,
    local_structure,
    model_from_dict,
    model_to_dict,
    validate_a1,
)

KINDS = ("tail", "limitlaw", "pickands", "check-model", "oracle-compare", "convergence")
THREADS_ENV = "SHEPPEXT_THREADS"
EXIT_OK, EXIT_RUN, EXIT_CONFIG = 0, 1, 2

_REQUIRED = object()

# dotted key -> (default, description).  Bracketed tags give provenance.
KEYS = {
    "kind": (_REQUIRED, "experiment: " + " | ".join(KINDS)),
    "model": (None, "input process, e.g. {family: fbm, hurst: 0.5}; families fou, cauchy, "
                    "tabulated, fbm, mixed_fbm, integrated, example21"),
    "window.a": (0.5, "shortest window length a > 0"),
    "window.b": (1.0, "longest window length b > a"),
    "horizon": (10.0, "horizon T of the s axis"),
    "pickands_sq": (None, "H_alpha^2 override; required when alpha is not 1 or 2"),
    "grid.mesh_d": (0.25, "grid spacing d u^(-2/alpha)"),
    "grid.n_tau": (None, "explicit tau points (overrides mesh_d)"),
    "grid.n_s": (None, "explicit s points (overrides mesh_d)"),
    "mc.n": (10_000, "replications"),
    "mc.seed": (0, "master seed"),
    "mc.threads": (1, "worker threads (results do not depend on it)"),
    "tail.u": ([2.0, 2.5, 3.0, 3.5], "increasing threshold ladder"),
    "limitlaw.T": ([50.0, 200.0, 800.0], "increasing horizons, each > e"),
    "limitlaw.r": (0.0, "Berman limit r >= 0"),
    "limitlaw.convention": ("exact", "normalizer b_T: exact | unscaled"),
    "convergence.d": ([1.0, 0.5, 0.25], "decreasing mesh factors d"),
    "convergence.u": (2.5, "threshold"),
    "oracle.u": ([1.5, 2.0, 2.5], "thresholds for the oracle comparison"),
    "oracle.n_tau": (4, "tau points of the oracle grid"),
    "oracle.n_s": (16, "s points of the oracle grid (n_tau * n_s <= 64)"),
    "pickands.alpha": (1.0, "exponent alpha in (0, 2]"),
    "pickands.lambda": (None, "interval length; default 64 for alpha <= 1, 16 for alpha >= 1.5"),
    "pickands.eta": (None, "simulation mesh; default lambda/1024"),
    "pickands.d": (None, "lattice spacing for H_{alpha,d}; omit for the continuum target"),
    "pickands.method": ("mixture", "estimator: mixture | direct"),
    "check.n_points": (9, "points per axis for the unit-variance check"),
    "output.dir": ("results", "output directory"),
    "output.name": (None, "file stem; defaults to the experiment kind"),
}

_SECTIONS = {k.split(".")[0] for k in KEYS if "." in k}


def _provenance(kind):
    return {
        "tail": "tail asymptote",
        "limitlaw": "limit law",
        "pickands": "Pickands constant",
        "check-model": "local structure",
        "oracle-compare": "oracle",
        "convergence": "mesh scaling",
    }[kind]


def keys_help():
    lines = ["config keys (dotted = nested mapping):"]
    for k, (default, desc) in KEYS.items():
        dflt = "required" if default is _REQUIRED else f"default {default!r}"
        lines.append(f"  {k:22s} {desc} ({dflt})")
    return "\n".join(lines)


# ---------------------------------------------------------------------------
# parsing
# ---------------------------------------------------------------------------


def _compose(text):
    """Parse YAML, returning ``(data, lines)`` with 1-based lines per key path."""
    try:
        node = yaml.compose(text, Loader=yaml.SafeLoader)
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        raise ConfigError(f"malformed YAML: {getattr(exc, 'problem', exc)}",
                          line=mark.line + 1 if mark else None) from exc
    lines = {}

    def walk(n, path):
        if isinstance(n, yaml.MappingNode):
            for k, v in n.value:
                p = path + (k.value,)
                lines[p] = k.start_mark.line + 1
                walk(v, p)

    if node is not None:
        walk(node, ())
    return data, lines


@dataclass
class RunConfig:
    kind: str
    values: dict
    defaulted: list = field(default_factory=list)
    model: object = None
    lines: dict = field(default_factory=dict)

    def __getitem__(self, key):
        return self.values[key]

    def resolved(self):
        out = {"defaulted": sorted(self.defaulted)}
        for k, v in self.values.items():
            out[k] = model_to_dict(v) if k == "model" and v is not None and not isinstance(v, dict) else v
        return out


def _err(msg, lines, *path):
    raise ConfigError(msg, line=lines.get(tuple(path)) or lines.get(tuple(path[:1])), key=".".join(path))


def parse_config(text, overrides=None) -> RunConfig:
    """Validate a YAML document; all errors are ``ConfigError`` with a line."""
    data, lines = _compose(text)
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError("config must be a mapping", line=1)
    flat = {}
    for k, v in data.items():
        if k in _SECTIONS:
            if not isinstance(v, dict):
                _err(f"section '{k}' must be a mapping", lines, k)
            for sk, sv in v.items():
                key = f"{k}.{sk}"
                if key not in KEYS:
                    _err(f"unknown key '{key}'", lines, k, sk)
                flat[key] = sv
        elif k in KEYS:
            flat[k] = v
        else:
            _err(f"unknown key '{k}'", lines, k)
    for k, v in (overrides or {}).items():
        flat[k] = v
    values, defaulted = {}, []
    for k, (default, _) in KEYS.items():
        if k in flat:
            values[k] = flat[k]
        elif default is _REQUIRED:
            raise ConfigError(f"missing required key '{k}'", line=1, key=k)
        else:
            values[k] = default
            defaulted.append(k)
    cfg = RunConfig(values["kind"], values, defaulted, None, lines)
    _validate(cfg)
    return cfg


def _num(cfg, key, lo=None, hi=None, integer=False, strict_lo=False):
    v = cfg.values[key]
    path = tuple(key.split("."))
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        _err(f"'{key}' must be a number, got {v!r}", cfg.lines, *path)
    if integer and int(v) != v:
        _err(f"'{key}' must be an integer", cfg.lines, *path)
    if lo is not None and (v < lo or (strict_lo and v == lo)):
        _err(f"'{key}' = {v} out of range", cfg.lines, *path)
    if hi is not None and v > hi:
        _err(f"'{key}' = {v} out of range", cfg.lines, *path)
    return int(v) if integer else float(v)


def _ladder(cfg, key, increasing=True):
    v = cfg.values[key]
    path = tuple(key.split("."))
    if isinstance(v, (int, float)) and not isinstance(v, bool):
        v = [v]
    if not isinstance(v, list) or not v or not all(isinstance(x, (int, float)) for x in v):
        _err(f"'{key}' must be a nonempty list of numbers", cfg.lines, *path)
    v = [float(x) for x in v]
    pairs = list(zip(v, v[1:]))
    if increasing and any(b <= a for a, b in pairs):
        _err(f"'{key}' must be increasing", cfg.lines, *path)
    if not increasing and any(b >= a for a, b in pairs):
        _err(f"'{key}' must be decreasing", cfg.lines, *path)
    cfg.values[key] = v
    return v


def _validate(cfg: RunConfig):
    L = cfg.lines
    if cfg.kind not in KINDS:
        _err(f"kind must be one of {', '.join(KINDS)}; got {cfg.kind!r}", L, "kind")
    if cfg.kind != "pickands":
        doc = cfg.values["model"]
        if not isinstance(doc, dict):
            _err(f"'{cfg.kind}' needs a model mapping", L, "model")
        try:
            cfg.model = model_from_dict(doc)
        except (ValueError, SheppError) as exc:
            _err(f"invalid model: {exc}", L, "model")
        a = _num(cfg, "window.a", lo=0.0, strict_lo=True)
        b = _num(cfg, "window.b")
        if not a < b:
            _err(f"need 0 < a < b, got a={a}, b={b}", L, "window", "b")
        _num(cfg, "horizon", lo=0.0, strict_lo=True)
        try:
            local_structure(cfg.model, a, b)
        except (ValueError, SheppError) as exc:
            _err(f"model unusable on [{a}, {b}]: {exc}", L, "window")
    for key in ("mc.n", "mc.threads"):
        _num(cfg, key, lo=1, integer=True)
    _num(cfg, "mc.seed", lo=0, integer=True)
    if cfg.values["pickands_sq"] is not None:
        _num(cfg, "pickands_sq", lo=0.0, strict_lo=True)
    if cfg.values["grid.n_tau"] is not None or cfg.values["grid.n_s"] is not None:
        _num(cfg, "grid.n_tau", lo=2, integer=True)
        _num(cfg, "grid.n_s", lo=2, integer=True)
    _num(cfg, "grid.mesh_d", lo=0.0, strict_lo=True)
    kind = cfg.kind
    if kind == "tail":
        _ladder(cfg, "tail.u")
        if cfg.values["mc.n"] < 1000:
            _err("tail runs need mc.n >= 1000", L, "mc", "n")
    elif kind == "limitlaw":
        Ts = _ladder(cfg, "limitlaw.T")
        if Ts[0] <= math.e:
            _err("every horizon must exceed e", L, "limitlaw", "T")
        _num(cfg, "limitlaw.r", lo=0.0)
        if cfg.values["limitlaw.convention"] not in ("exact", "unscaled"):
            _err("convention must be 'exact' or 'unscaled'", L, "limitlaw", "convention")
        if isinstance(cfg.model, Example21Field):
            _err("limitlaw needs a stationary or stationary-increment model", L, "model")
    elif kind == "convergence":
        _ladder(cfg, "convergence.d", increasing=False)
        _num(cfg, "convergence.u")
    elif kind == "oracle-compare":
        _ladder(cfg, "oracle.u")
        nt = _num(cfg, "oracle.n_tau", lo=2, integer=True)
        ns = _num(cfg, "oracle.n_s", lo=2, integer=True)
        if nt * ns > 64:
            _err("oracle grid must have at most 64 points", L, "oracle")
    elif kind == "pickands":
        alpha = _num(cfg, "pickands.alpha", lo=0.0, hi=2.0, strict_lo=True)
        if cfg.values["pickands.lambda"] is None:
            cfg.values["pickands.lambda"] = pickands.default_lambda(alpha)
        lam = _num(cfg, "pickands.lambda", lo=0.0, strict_lo=True)
        if cfg.values["pickands.eta"] is None:
            cfg.values["pickands.eta"] = lam / 1024
        eta = _num(cfg, "pickands.eta", lo=0.0, strict_lo=True)
        if cfg.values["pickands.d"] is None and eta > lam / 256 * (1 + 1e-12):
            _err("pickands.eta must be at most lambda/256", L, "pickands", "eta")
        if cfg.values["pickands.d"] is not None:
            _num(cfg, "pickands.d", lo=0.0, strict_lo=True)
        if cfg.values["pickands.method"] not in pickands.METHODS:
            _err(f"method must be one of {pickands.METHODS}", L, "pickands", "method")
        if cfg.values["mc.n"] < 100:
            _err("pickands runs need mc.n >= 100", L, "mc", "n")
    elif kind == "check-model":
        _num(cfg, "check.n_points", lo=2, integer=True)


def load_config(path, overrides=None) -> RunConfig:
    with open(path) as fh:
        return parse_config(fh.read(), overrides)


def preset_names():
    return sorted(p.name[:-5] for p in resources.files("sheppext.presets").iterdir() if p.name.endswith(".yaml"))


def preset_text(name):
    res = resources.files("sheppext.presets") / f"{name}.yaml"
    if not res.is_file():
        raise ConfigError(f"unknown preset {name!r}; available: {', '.join(preset_names())}")
    return res.read_text()


# ---------------------------------------------------------------------------
# running
# ---------------------------------------------------------------------------


def _g(x):
    return f"{x:.15g}"


def _grid_for(cfg, u_max, alpha):
    a, b, T = cfg["window.a"], cfg["window.b"], cfg["horizon"]
    if cfg["grid.n_tau"] is not None:
        return SheppGrid(a, b, T, int(cfg["grid.n_tau"]), int(cfg["grid.n_s"]))
    return SheppGrid.from_mesh(a, b, T, experiments.default_mesh(alpha, u_max, cfg["grid.mesh_d"]))


@dataclass
class Outcome:
    report: object
    verdict: object  # True / False / None (no verdict for this run)
    summary: list


def _run_tail(cfg, threads):
    m = cfg.model
    alpha = local_structure(m, cfg["window.a"], cfg["window.b"]).alpha
    grid = _grid_for(cfg, max(cfg["tail.u"]), alpha)
    st = experiments.tail_ratio_study(m, grid, cfg["tail.u"], cfg["mc.n"], cfg["pickands_sq"], cfg["mc.seed"], threads)
    tr = st.trend()
    lines = [
        f"tail constant C = {_g(st.constant)}",
        f"grid {grid.n_tau} x {grid.n_s} (spacing {grid.ds:.6g})",
        "u        p_hat       stderr      asymptote   ratio",
    ]
    lines += [f"{u:<8g} {p:<11.6g} {se:<11.4g} {a:<11.6g} {r:.4g}" for u, p, se, a, r in st.rows()]
    ok = tr["within"] and tr["variation"] < 0.30
    lines.append(f"ratio band [0.4, 1.6]: {'met' if tr['within'] else 'violated'}; "
                 f"variation {tr['variation']:.3f} (target < 0.30)")
    return Outcome(st, ok, lines)


def _run_limitlaw(cfg, threads):
    rep = experiments.empirical_limit_law(
        cfg.model, cfg["window.a"], cfg["window.b"], cfg["limitlaw.T"], cfg["mc.n"],
        cfg["pickands_sq"], cfg["limitlaw.r"], cfg["mc.seed"], cfg["grid.mesh_d"],
        cfg["limitlaw.convention"], threads,
    )
    lines = ["T          KS        a_T               b_T"]
    lines += [f"{T:<10g} {ks:<9.4f} {_g(aT):<17} {_g(bT)}" for T, ks, _, aT, bT in rep.rows()]
    ok = rep.trend_ok()
    lines.append(f"KS nonincreasing (one inversion within 2/sqrt(n) allowed): {'met' if ok else 'violated'}")
    return Outcome(rep, ok, lines)


def _run_convergence(cfg, threads):
    st = experiments.convergence_study(
        cfg.model, cfg["window.a"], cfg["window.b"], cfg["horizon"], cfg["convergence.u"],
        cfg["convergence.d"], cfg["mc.n"], cfg["mc.seed"], threads,
    )
    lines = ["d        spacing     p_hat       stderr"]
    lines += [f"{d:<8g} {h:<11.6g} {p:<11.6g} {se:.4g}" for d, h, _, _, p, se in st.rows()]
    ok = st.stabilized()
    lines.append(f"stabilized (two finest within 2 stderr): {'met' if ok else 'violated'}")
    return Outcome(st, ok, lines)


def _run_oracle(cfg, threads):
    grid = SheppGrid(cfg["window.a"], cfg["window.b"], cfg["horizon"], int(cfg["oracle.n_tau"]), int(cfg["oracle.n_s"]))
    cmp_ = experiments.oracle_compare(cfg.model, grid, cfg["oracle.u"], cfg["mc.n"], cfg["mc.seed"], threads)
    lines = ["u        pipeline    oracle      z"]
    lines += [f"{u:<8g} {p:<11.6g} {o:<11.6g} {z:+.3f}" for u, p, _, o, _, z in cmp_.rows()]
    ok = cmp_.agree()
    lines.append(f"agreement within 3 combined stderr: {'met' if ok else 'violated'}")
    return Outcome(cmp_, ok, lines)


@dataclass
class _PickandsReport:
    COLUMNS = pickands.LEDGER_COLUMNS
    estimates: list
    config: dict

    def rows(self):
        return [tuple(e.row()[c] for c in self.COLUMNS) for e in self.estimates]


ANCHOR_BANDS = {1.0: (0.85, 1.05), 2.0: (0.50, 0.60)}


def _run_pickands(cfg, threads):
    alpha, lam, eta = cfg["pickands.alpha"], cfg["pickands.lambda"], cfg["pickands.eta"]
    d, n, seed, method = cfg["pickands.d"], cfg["mc.n"], cfg["mc.seed"], cfg["pickands.method"]
    if d is None:
        est = pickands.estimate_pickands(alpha, lam, eta, n, seed, method)
    else:
        est = pickands.estimate_pickands_discrete(alpha, d, lam, n, seed, eta, method)
    lines = [
        f"alpha={alpha:g} lambda={lam:g} eta={eta:g}" + (f" d={d:g}" if d is not None else ""),
        f"estimate = {_g(est.estimate)} +- {est.stderr:.3g}",
    ]
    known = pickands.known_value(alpha)
    verdict = None
    if known is not None:
        name = "1" if alpha == 1 else "1/sqrt(pi)"
        lines.append(f"exact H_alpha = {name} = {_g(known)}")
        if alpha == 2:
            lines.append(f"finite-lambda continuum value = {_g(pickands.continuum_finite_lambda_alpha2(lam))}")
        lo, hi = ANCHOR_BANDS[float(alpha)]
        if d is None:
            verdict = lo <= est.estimate <= hi
            lines.append(f"anchor band [{lo}, {hi}]: {'met' if verdict else 'violated'}")
    cfgd = {"kind": "pickands", "alpha": alpha, "lambda": lam, "eta": eta, "d": d, "n": n, "seed": seed, "method": method}
    return Outcome(_PickandsReport([est], cfgd), verdict, lines)


@dataclass
class _CheckReport:
    COLUMNS = ("tau", "g")
    taus: list
    gs: list
    config: dict

    def rows(self):
        return list(zip(self.taus, self.gs))


def _run_check(cfg, threads):
    m, a, b = cfg.model, cfg["window.a"], cfg["window.b"]
    ls = local_structure(m, a, b)
    k = int(cfg["check.n_points"])
    taus = np.linspace(a, b, k)
    ss = np.linspace(0.0, cfg["horizon"], k)
    pts = np.array([(t, s) for t in taus for s in ss])
    rep = validate_a1(m, pts)
    gs = [float(ls.g(t)) for t in taus]
    lines = [f"alpha = {ls.alpha:g}", *(f"g({t:.6g}) = {_g(g)}" for t, g in zip(taus, gs))]
    ok = rep.ok
    lines.append(f"unit variance: max deviation {rep.max_unit_variance_deviation:.3g}; "
                 f"s-dependence {rep.max_s_dependence:.3g}")
    if not isinstance(m, Example21Field):
        slope, _ = fit_local_exponent(m, a, b)
        fit_ok = abs(slope - ls.alpha) < 0.05
        lines.append(f"fitted local exponent {slope:.4f} vs alpha {ls.alpha:g}: {'met' if fit_ok else 'violated'}")
        ok = ok and fit_ok
    try:
        ta = asymptotics.tail_constant(ls, cfg["pickands_sq"])
        lines.append(f"tail constant C = {_g(ta.C)}")
    except ValueError as exc:
        lines.append(f"tail constant not available: {exc}")
    cfgd = {"kind": "check-model", "model": model_to_dict(m), "a": a, "b": b, "T": cfg["horizon"]}
    return Outcome(_CheckReport(list(taus), gs, cfgd), ok, lines)


_RUNNERS = {
    "tail": _run_tail,
    "limitlaw": _run_limitlaw,
    "convergence": _run_convergence,
    "oracle-compare": _run_oracle,
    "pickands": _run_pickands,
    "check-model": _run_check,
}


def run(cfg: RunConfig, threads=None, out=sys.stdout):
    """Execute a parsed config; returns ``(outcome, csv_path, manifest_path)``."""
    threads = threads or int(cfg["mc.threads"])
    outcome = _RUNNERS[cfg.kind](cfg, threads)
    name = cfg["output.name"] or cfg.kind
    paths = experiments.persist_results(
        outcome.report, cfg["output.dir"], name, config=cfg.resolved(), seeds=[int(cfg["mc.seed"])]
    )
    if cfg.kind == "pickands":
        pickands.append_ledger(os.path.join(cfg["output.dir"], "pickands_ledger.csv"), outcome.report.estimates)
    print(f"[{cfg.kind}] {_provenance(cfg.kind)}", file=out)
    for line in outcome.summary:
        print("  " + line, file=out)
    print(f"  wrote {paths[0]}", file=out)
    return outcome, *paths


def build_parser():
    p = argparse.ArgumentParser(
        prog="sheppext",
        description="Monte Carlo and asymptotic studies of Shepp-statistic extremes.",
        epilog=keys_help() + f"\n\nenvironment: {THREADS_ENV} overrides the thread count."
        "\nexit codes: 0 ok, 1 run error (or failed verdict with --strict), 2 config error.",
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    src = p.add_mutually_exclusive_group()
    src.add_argument("--config", metavar="PATH", help="YAML run config")
    src.add_argument("--preset", metavar="NAME", help="bundled config (see --list-presets)")
    p.add_argument("--list-presets", action="store_true", help="list bundled configs and exit")
    p.add_argument("--seed", type=int, help="override mc.seed")
    p.add_argument("--threads", type=int, help="override mc.threads")
    p.add_argument("--out", metavar="DIR", help="override output.dir")
    p.add_argument("--strict", action="store_true", help="exit 1 when a verdict is violated")
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.list_presets:
        print("\n".join(preset_names()))
        return EXIT_OK
    overrides = {}
    if args.seed is not None:
        overrides["mc.seed"] = args.seed
    if args.out is not None:
        overrides["output.dir"] = args.out
    threads = args.threads
    if threads is None and os.environ.get(THREADS_ENV):
        try:
            threads = int(os.environ[THREADS_ENV])
        except ValueError:
            print(f"config error: {THREADS_ENV} must be an integer", file=sys.stderr)
            return EXIT_CONFIG
    if threads is not None:
        if threads < 1:
            print("config error: thread count must be positive", file=sys.stderr)
            return EXIT_CONFIG
        overrides["mc.threads"] = threads
    try:
        if args.config:
            source = args.config
            cfg = load_config(args.config, overrides)
        elif args.preset:
            source = f"preset {args.preset}"
            cfg = parse_config(preset_text(args.preset), overrides)
        else:
            parser.print_usage(sys.stderr)
            print("error: one of --config or --preset is required", file=sys.stderr)
            return EXIT_CONFIG
    except OSError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ConfigError as exc:
        print(f"config error ({source}): {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        outcome, _, _ = run(cfg)
    except (SheppError, ValueError, OSError) as exc:
        print(f"run error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUN
    if args.strict and outcome.verdict is False:
        print("strict: verdict violated", file=sys.stderr)
        return EXIT_RUN
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
