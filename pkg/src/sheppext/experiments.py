"""Desk-scale Monte Carlo studies built on the field simulator.

Every study draws replication ``k`` from ``sub_seed(seed, k)``, so results
depend only on the configuration and the master seed, never on thread count.
Reports expose ``COLUMNS`` and ``rows()`` and are written by
``persist_results`` as a CSV plus a JSON manifest.
"""

from __future__ import annotations

import csv
import datetime as _dt
import json
import math
import os
import platform
from dataclasses import dataclass, field

import numpy as np
import scipy
from scipy import stats

from . import asymptotics, kernels
from .fieldsim import SheppGrid, _fraction, _fraction_gcd, oracle_sample_max, simulate_maxima
from .models import Example21Field, local_structure, model_to_dict
from .results import McEstimate, config_digest
from .seeding import sub_seed

__all__ = [
    "McEstimate",
    "TailStudy",
    "LimitLawReport",
    "ConvergenceStudy",
    "OracleComparison",
    "estimate_tail_mc",
    "tail_ratio_study",
    "default_mesh",
    "empirical_limit_law",
    "convergence_study",
    "nested_grids",
    "oracle_compare",
    "persist_results",
    "read_csv",
]

DEFAULT_U_LADDER = (2.0, 2.5, 3.0, 3.5)
MESH_D = 0.25


def _digest(op, model, **kw):
    return config_digest({"op": op, "model": model_to_dict(model), **kw})


def default_mesh(alpha, u, d=MESH_D):
    """Grid spacing ``d u^(-2/alpha)``."""
    return d * u ** (-2.0 / alpha)


def estimate_tail_mc(model, grid: SheppGrid, u, n, seed, threads=1):
    """Fraction of ``n`` simulated fields whose maximum exceeds ``u``.

    ``u`` may be a sequence; all thresholds share the same replications.
    """
    if n < 1000:
        raise ValueError("need at least 1000 replications")
    mx = simulate_maxima(model, [grid], n, seed, threads)[:, 0]
    us = np.atleast_1d(np.asarray(u, dtype=float))
    digest = _digest("tail", model, grid=grid.to_dict(), n=n, seed=seed)
    res = [McEstimate.from_count(int(np.count_nonzero(mx > x)), n, x, digest, seed) for x in us]
    return res[0] if np.ndim(u) == 0 else res


# ---------------------------------------------------------------------------
# tail ratio
# ---------------------------------------------------------------------------


@dataclass
class TailStudy:
    COLUMNS = ("u", "p_hat", "stderr", "asym", "ratio")

    estimates: list
    asym: list
    constant: float
    grid: SheppGrid
    config: dict = field(default_factory=dict)

    @property
    def ratios(self):
        return [e.p_hat / a if a > 0 else math.nan for e, a in zip(self.estimates, self.asym)]

    def rows(self):
        return [
            (e.u, e.p_hat, e.stderr, a, r)
            for e, a, r in zip(self.estimates, self.asym, self.ratios)
        ]

    def trend(self):
        """Summary of how the ratio behaves over the ladder.

        ``variation`` is ``max/min - 1`` over thresholds with a nonzero
        count; ``within`` checks the band ``[0.4, 1.6]``.
        """
        r = np.array([x for x in self.ratios if np.isfinite(x) and x > 0])
        if r.size == 0:
            return {"variation": math.nan, "min": math.nan, "max": math.nan, "within": False}
        return {
            "variation": float(r.max() / r.min() - 1.0),
            "min": float(r.min()),
            "max": float(r.max()),
            "within": bool(np.all((r >= 0.4) & (r <= 1.6))),
            "last_step": float(r[-1] / r[-2] - 1.0) if r.size > 1 else 0.0,
        }


def tail_ratio_study(model, grid: SheppGrid, u_ladder=DEFAULT_U_LADDER, n=200_000, pickands_sq=None, seed=0, threads=1):
    """MC exceedance versus the first-order asymptote on one shared sample.

    The grid is fixed for the whole ladder; pass one whose spacing is at
    most ``default_mesh(alpha, max(u_ladder))``.
    """
    u_ladder = [float(u) for u in u_ladder]
    if not u_ladder or any(b <= a for a, b in zip(u_ladder, u_ladder[1:])):
        raise ValueError("u ladder must be nonempty and increasing")
    ta = asymptotics.tail_constant(local_structure(model, grid.a, grid.b), pickands_sq, grid.T)
    ests = estimate_tail_mc(model, grid, u_ladder, n, seed, threads)
    asym = [float(asymptotics.tail_probability_asym(ta, u)) for u in u_ladder]
    cfg = {"kind": "tail", "model": model_to_dict(model), "grid": grid.to_dict(), "u": u_ladder, "n": n, "seed": seed}
    return TailStudy(ests, asym, ta.C, grid, cfg)


# ---------------------------------------------------------------------------
# limit law
# ---------------------------------------------------------------------------


@dataclass
class LimitLawReport:
    COLUMNS = ("T", "ks", "n", "a_T", "b_T")

    T_ladder: list
    ks_distances: list
    n_per_T: int
    normalizers: list
    r: float = 0.0
    config: dict = field(default_factory=dict)

    def rows(self):
        return [
            (T, ks, self.n_per_T, nz.a_T, nz.b_T)
            for T, ks, nz in zip(self.T_ladder, self.ks_distances, self.normalizers)
        ]

    def inversions(self, slack=None):
        """Ladder steps where KS increases by more than ``slack`` (default 0)."""
        slack = 0.0 if slack is None else slack
        ks = self.ks_distances
        return [i for i in range(1, len(ks)) if ks[i] > ks[i - 1] + slack]

    def trend_ok(self):
        """Nonincreasing KS, allowing one inversion within ``2/sqrt(n)``."""
        noise = 2.0 / math.sqrt(self.n_per_T)
        strict = self.inversions()
        return len(strict) <= 1 and not self.inversions(noise)


def empirical_limit_law(
    model, a, b, T_ladder, n_per_T, pickands_sq=None, r=0.0, seed=0, d=MESH_D, convention="exact", threads=1
):
    """KS distances of normalized simulated maxima to ``limit_cdf(., r)``.

    For each horizon the grid spacing is ``d b_T^(-2/alpha)``; horizon ``i``
    uses master seed ``sub_seed(seed, i)``.
    """
    if isinstance(model, Example21Field):
        raise ValueError("limit-law study needs a stationary or stationary-increment input")
    T_ladder = [float(T) for T in T_ladder]
    if not T_ladder or any(b2 <= a2 for a2, b2 in zip(T_ladder, T_ladder[1:])):
        raise ValueError("T ladder must be nonempty and increasing")
    ls = local_structure(model, a, b)
    ta = asymptotics.tail_constant(ls, pickands_sq)
    ks_list, nz_list, grids = [], [], []
    for i, T in enumerate(T_ladder):
        nz = asymptotics.normalizers(ta, T, r, convention)
        grid = SheppGrid.from_mesh(a, b, T, default_mesh(ls.alpha, nz.b_T, d))
        mx = simulate_maxima(model, [grid], n_per_T, sub_seed(seed, i), threads)[:, 0]
        ks = stats.kstest(nz.normalize(mx), lambda x: asymptotics.limit_cdf(x, r)).statistic
        ks_list.append(float(ks))
        nz_list.append(nz)
        grids.append(grid.to_dict())
    cfg = {
        "kind": "limitlaw",
        "model": model_to_dict(model),
        "a": a,
        "b": b,
        "T": T_ladder,
        "n": n_per_T,
        "r": r,
        "d": d,
        "convention": convention,
        "grids": grids,
        "seed": seed,
    }
    return LimitLawReport(T_ladder, ks_list, n_per_T, nz_list, r, cfg)


# ---------------------------------------------------------------------------
# grid refinement
# ---------------------------------------------------------------------------


def nested_grids(a, b, T, spacings):
    """Grids with spacing ``h_i <= spacings[i]``, each refining the previous.

    ``h_i = unit / k_i`` with ``unit = gcd(a, b, T)`` and every ``k_i`` a
    multiple of ``k_{i-1}``, so coarse points are a subset of fine ones.
    """
    unit = _fraction_gcd([_fraction(a, "a"), _fraction(b, "b"), _fraction(T, "T")])
    out, k_prev = [], 1
    for q in spacings:
        k = max(1, math.ceil(float(unit) / q - 1e-12))
        k = k_prev * math.ceil(k / k_prev)
        h = unit / k
        n_tau = round(float((_fraction(b, "b") - _fraction(a, "a")) / h)) + 1
        n_s = round(float(_fraction(T, "T") / h)) + 1
        out.append(SheppGrid(a, b, T, n_tau, n_s))
        k_prev = k
    return out


@dataclass
class ConvergenceStudy:
    COLUMNS = ("d", "spacing", "n_tau", "n_s", "p_hat", "stderr")

    d_ladder: list
    grids: list
    estimates: list
    config: dict = field(default_factory=dict)

    def rows(self):
        return [
            (d, g.ds, g.n_tau, g.n_s, e.p_hat, e.stderr)
            for d, g, e in zip(self.d_ladder, self.grids, self.estimates)
        ]

    def stabilized(self):
        """Change between the two finest meshes below two standard errors."""
        if len(self.estimates) < 2:
            return False
        e1, e2 = self.estimates[-2], self.estimates[-1]
        return abs(e2.p_hat - e1.p_hat) < 2.0 * max(e2.stderr, 1e-300)


def convergence_study(model, a, b, T, u, d_ladder, n, seed, threads=1):
    """``p_hat(d)`` on nested grids of spacing ``d u^(-2/alpha)`` at shared seeds."""
    d_ladder = [float(d) for d in d_ladder]
    if not d_ladder:
        raise ValueError("empty d ladder")
    if any(d2 >= d1 for d1, d2 in zip(d_ladder, d_ladder[1:])) or d_ladder[-1] <= 0:
        raise ValueError("d ladder must be positive and decreasing")
    alpha = local_structure(model, a, b).alpha
    grids = nested_grids(a, b, T, [default_mesh(alpha, u, d) for d in d_ladder])
    mx = simulate_maxima(model, grids, n, seed, threads)
    cfg = {
        "kind": "convergence",
        "model": model_to_dict(model),
        "a": a,
        "b": b,
        "T": T,
        "u": u,
        "d": d_ladder,
        "n": n,
        "seed": seed,
    }
    digest = config_digest(cfg)
    ests = [McEstimate.from_count(int(np.count_nonzero(mx[:, i] > u)), n, u, digest, seed) for i in range(len(grids))]
    return ConvergenceStudy(d_ladder, grids, ests, cfg)


# ---------------------------------------------------------------------------
# oracle comparison
# ---------------------------------------------------------------------------


@dataclass
class OracleComparison:
    COLUMNS = ("u", "p_pipeline", "stderr_pipeline", "p_oracle", "stderr_oracle", "z")

    pipeline: list
    oracle: list
    config: dict = field(default_factory=dict)

    def z_scores(self):
        out = []
        for p, o in zip(self.pipeline, self.oracle):
            se = math.hypot(p.stderr, o.stderr)
            out.append((p.p_hat - o.p_hat) / se if se > 0 else 0.0)
        return out

    def rows(self):
        return [
            (p.u, p.p_hat, p.stderr, o.p_hat, o.stderr, z)
            for p, o, z in zip(self.pipeline, self.oracle, self.z_scores())
        ]

    def agree(self, k=3.0):
        return all(p.agrees_with(o, k) for p, o in zip(self.pipeline, self.oracle))


def oracle_compare(model, grid: SheppGrid, u_list, n, seed, threads=1):
    """Pipeline and dense-Cholesky exceedance fractions on the same small grid."""
    us = [float(u) for u in u_list]
    pipe = estimate_tail_mc(model, grid, us, n, seed, threads)
    orac = oracle_sample_max(model, grid, n, us, seed)
    cfg = {"kind": "oracle-compare", "model": model_to_dict(model), "grid": grid.to_dict(), "u": us, "n": n, "seed": seed}
    return OracleComparison(pipe, orac, cfg)


# ---------------------------------------------------------------------------
# persistence
# ---------------------------------------------------------------------------


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def _versions():
    from . import __version__

    return {
        "sheppext": __version__,
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "python": platform.python_version(),
        "kernels": kernels.BACKEND,
    }


def persist_results(report, out_dir, name, config=None, seeds=None):
    """Write ``<name>.csv`` and ``<name>.manifest.json`` under ``out_dir``.

    The CSV holds only deterministic values (floats as shortest round-trip
    repr); the timestamp lives in the manifest.  Returns both paths.
    """
    config = dict(report.config if config is None else config)
    os.makedirs(out_dir, exist_ok=True)
    csv_path = os.path.join(out_dir, f"{name}.csv")
    man_path = os.path.join(out_dir, f"{name}.manifest.json")
    with open(csv_path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(report.COLUMNS)
        for row in report.rows():
            writer.writerow([_fmt(v) for v in row])
    manifest = {
        "name": name,
        "columns": list(report.COLUMNS),
        "config": config,
        "config_digest": config_digest(config),
        "seeds": seeds if seeds is not None else [config.get("seed")],
        "versions": _versions(),
        "created": _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),
    }
    with open(man_path, "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True, default=str)
        fh.write("\n")
    return csv_path, man_path


def read_csv(path):
    """Rows of a results CSV as dicts of floats (ints where exact)."""
    out = []
    with open(path, newline="") as fh:
        for rec in csv.DictReader(fh):
            row = {}
            for k, v in rec.items():
                try:
                    row[k] = int(v)
                except ValueError:
                    row[k] = float(v)
            out.append(row)
    return out
