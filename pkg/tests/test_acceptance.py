"""Acceptance criteria 1-9.

Each test prints one ``criterion N: PASS/FAIL`` line (also collected in the
terminal summary) and then asserts the verdict.  Run standalone with

    python tests/test_acceptance.py
"""

import math
import os
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest
from scipy import integrate

from sheppext import asymptotics as A
from sheppext import fieldsim as F
from sheppext.experiments import empirical_limit_law, oracle_compare, tail_ratio_study
from sheppext.fieldsim import SheppGrid
from sheppext.models import (
    Example21Field,
    IncrementVariance,
    StationaryCovariance,
    eval_variance,
)
from sheppext.pickands import estimate_pickands

ROOT = Path(__file__).resolve().parents[1]
THREADS = min(8, os.cpu_count() or 1)

pytestmark = pytest.mark.slow


def test_criterion_1_fbm_identity(acceptance_report):
    rng = np.random.default_rng(20240101)
    worst = 0.0
    for _ in range(20):
        H = rng.uniform(0.05, 0.95)
        a = rng.uniform(0.1, 2.0)
        b = a + rng.uniform(0.1, 3.0)
        T = rng.uniform(1.0, 1e4)
        u = rng.uniform(1.0, 30.0)
        h2 = rng.uniform(0.3, 1.5)
        got = A.tail_prop32(IncrementVariance.fbm(H), a, b, T, u, pickands_sq=h2)
        want = h2 * 0.5 ** (1 / H) * (1 / a - 1 / b) * T * u ** (2 / H) * A.normal_tail(u)
        worst = max(worst, abs(got / want - 1))
    ok = acceptance_report(1, worst < 1e-10, f"max rel err {worst:.2e} over 20 draws (tol 1e-10)")
    assert ok


def _integrated_reference(r, a, b):
    def inner(t):
        return integrate.quad(lambda s: (t - s) * r(s), 0.0, t, epsabs=0, epsrel=1e-12, limit=200)[0]

    return integrate.quad(lambda t: 1.0 / inner(t), a, b, epsabs=0, epsrel=1e-12, limit=200)[0] / (4 * math.pi)


def test_criterion_2_integrated_identity(acceptance_report):
    t = np.linspace(0.0, 20.0, 2001)
    fixtures = {
        "fou1": (StationaryCovariance.fractional_ou(1.0), lambda s: math.exp(-s)),
        "fou2": (StationaryCovariance.fractional_ou(2.0), lambda s: math.exp(-s * s)),
        "cauchy": (StationaryCovariance.generalized_cauchy(2.0, 1.0), lambda s: 1 / (1 + s * s)),
        "flat": (StationaryCovariance.tabulated(t, np.ones_like(t)), lambda s: 1.0),
    }
    rng = np.random.default_rng(7)
    worst = 0.0
    for zeta, r in fixtures.values():
        for _ in range(3):
            a = rng.uniform(0.2, 1.0)
            b = a + rng.uniform(0.2, 2.0)
            T = rng.uniform(1.0, 1e3)
            u = rng.uniform(2.0, 10.0)
            got = A.tail_prop32(IncrementVariance.integrated(zeta), a, b, T, u, pickands_sq=1 / math.pi)
            want = T * _integrated_reference(r, a, b) * u**2 * A.normal_tail(u)
            worst = max(worst, abs(got / want - 1))
    ok = acceptance_report(2, worst < 1e-8, f"max rel err {worst:.2e} over {len(fixtures)} fixtures (tol 1e-8)")
    assert ok


def test_criterion_3_pickands_anchors(acceptance_report):
    e1 = estimate_pickands(1.0, 64.0, 1 / 64, 10_000, seed=1)
    e2 = estimate_pickands(2.0, 16.0, 1 / 128, 10_000, seed=2)
    ok1 = 0.85 <= e1.estimate <= 1.05
    ok2 = 0.50 <= e2.estimate <= 0.60
    detail = (
        f"alpha=1: {e1.estimate:.4f} +- {e1.stderr:.4f} in [0.85, 1.05] {ok1}; "
        f"alpha=2: {e2.estimate:.4f} +- {e2.stderr:.4f} in [0.50, 0.60] {ok2} "
        f"(closed-form target at lambda=16: {1 / math.sqrt(math.pi) + 1 / 16:.4f})"
    )
    ok = acceptance_report(3, ok1 and ok2, detail)
    assert ok


def test_criterion_4_oracle_equivalence(acceptance_report):
    fou1 = StationaryCovariance.fractional_ou(1.0)
    models = {
        "brownian": IncrementVariance.fbm(0.5),
        "fbm0.7": IncrementVariance.fbm(0.7),
        "fou1": fou1,
        "example21": Example21Field(fou1),
    }
    grid = SheppGrid(0.5, 1.0, 1.5, 4, 16)
    parts, ok = [], True
    for i, (name, model) in enumerate(models.items()):
        cmp_ = oracle_compare(model, grid, [1.5, 2.0, 2.5], 10_000, seed=100 + i, threads=THREADS)
        z = cmp_.z_scores()
        ok &= cmp_.agree(3.0)
        parts.append(f"{name} max|z|={max(abs(x) for x in z):.2f}")
    ok = acceptance_report(4, ok, "; ".join(parts) + " (tol 3)")
    assert ok


def test_criterion_5_tail_ratio(acceptance_report):
    grid = SheppGrid.from_mesh(0.5, 1.0, 10.0, 0.25 * 3.5**-2)
    study = tail_ratio_study(
        IncrementVariance.fbm(0.5), grid, (2.5, 3.0, 3.5), n=200_000, pickands_sq=1.0, seed=5, threads=THREADS
    )
    tr = study.trend()
    ok = tr["within"] and tr["variation"] < 0.30
    ratios = ", ".join(f"{r:.3f}" for r in study.ratios)
    ok = acceptance_report(
        5, ok, f"ratios [{ratios}] band [0.4, 1.6] {tr['within']}; variation {tr['variation']:.1%} (tol 30%)"
    )
    assert ok


def test_criterion_6_limit_law(acceptance_report):
    rep = empirical_limit_law(
        IncrementVariance.fbm(0.5), 0.5, 1.0, (50.0, 200.0, 800.0), 2000, pickands_sq=1.0, seed=6, threads=THREADS
    )
    ks = ", ".join(f"{k:.4f}" for k in rep.ks_distances)
    ok = acceptance_report(6, rep.trend_ok(), f"KS [{ks}], inversions {rep.inversions()}, slack {2 / math.sqrt(2000):.4f}")
    assert ok


def test_criterion_7_limit_cdf(acceptance_report):
    z = np.random.default_rng(77).standard_normal(10_000_000)
    worst = 0.0
    for r in (0.25, 1.0):
        for x in (-1.0, 0.0, 1.0, 2.0):
            mc = np.exp(-np.exp(-x - r + math.sqrt(2 * r) * z)).mean()
            worst = max(worst, abs(A.limit_cdf(x, r) - mc))
    xs = np.linspace(-3.0, 10.0, 131)
    gumbel = max(abs(A.limit_cdf(x, 0.0) - math.exp(-math.exp(-x))) for x in xs)
    ok = worst < 5e-4 and gumbel < 1e-12
    ok = acceptance_report(7, ok, f"max |quad - MC| {worst:.2e} (tol 5e-4); r=0 vs Gumbel {gumbel:.1e} (tol 1e-12)")
    assert ok


def _check_autocov(paths, i0, lags, target):
    """Largest |z| of the mean products ``X(t_i0) X(t_i0 + k)`` against ``target``."""
    x0 = paths[:, i0]
    worst = 0.0
    for k in lags:
        prod = x0 * paths[:, i0 + k]
        se = prod.std(ddof=1) / math.sqrt(len(prod))
        worst = max(worst, abs(prod.mean() - target(k)) / se)
    return worst


def _increment_cov(model, dt):
    def cov(i, j):
        t, s = i * dt, j * dt
        v = lambda x: float(eval_variance(model, x)) if x > 0 else 0.0
        return 0.5 * (v(t) + v(s) - v(abs(t - s)))

    return cov


def test_criterion_8_simulation_fidelity(acceptance_report):
    n_paths, n_pts, dt = 10_000, 65, 1 / 16
    lags = (1, 2, 4, 8, 16)
    i0 = 16
    fou = StationaryCovariance.fractional_ou(1.0)
    cauchy = StationaryCovariance.generalized_cauchy(1.5, 1.0)
    results = {}

    X = np.array([F.simulate_stationary(cauchy, n_pts, dt, s).values for s in range(n_paths)])
    results["stationary"] = _check_autocov(X, i0, lags, lambda k: float(cauchy(k * dt)))

    fbm = IncrementVariance.fbm(0.7)
    X = np.array([F.simulate_fbm(0.7, n_pts, dt, s).values for s in range(n_paths)])
    c = _increment_cov(fbm, dt)
    results["fbm"] = _check_autocov(X, i0, lags, lambda k: c(i0, i0 + k))

    w, h = (0.6, 0.8), (0.3, 0.7)
    mixed = IncrementVariance.mixed_fbm(w, h)
    X = np.array([F.simulate_mixed_fbm(w, h, n_pts, dt, s).values for s in range(n_paths)])
    c = _increment_cov(mixed, dt)
    results["mixed_fbm"] = _check_autocov(X, i0, lags, lambda k: c(i0, i0 + k))

    integ = IncrementVariance.integrated(fou)
    X = np.array([F.simulate_integrated(fou, n_pts, dt, s).values for s in range(n_paths)])
    c = _increment_cov(integ, dt)
    results["integrated"] = _check_autocov(X, i0, lags, lambda k: c(i0, i0 + k))

    ok = all(z < 3.0 for z in results.values())
    detail = "; ".join(f"{k} max|z|={v:.2f}" for k, v in results.items()) + " (tol 3)"
    ok = acceptance_report(8, ok, detail)
    assert ok


def test_criterion_9_invariant_suite(acceptance_report):
    cmd = [sys.executable, "-m", "pytest", "-q", "-p", "no:cacheprovider", "-m", "invariant", "tests",
           "--ignore=tests/test_acceptance.py"]
    proc = subprocess.run(cmd, cwd=ROOT, capture_output=True, text=True)
    tail = [ln for ln in proc.stdout.strip().splitlines() if ln.strip()]
    summary = tail[-1] if tail else "no output"
    failed = [ln.split(" - ")[0].removeprefix("FAILED ") for ln in tail if ln.startswith("FAILED")]
    detail = summary + (f"; failing: {', '.join(failed)}" if failed else "")
    ok = acceptance_report(9, proc.returncode == 0, detail)
    assert ok


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-v", "-s", "-p", "no:cacheprovider"]))
