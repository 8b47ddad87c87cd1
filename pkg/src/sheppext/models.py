"""Input-process models and the exact correlation of the standardized field.

Two input families are supported:

* ``StationaryCovariance`` -- unit-variance stationary processes described by
  their correlation ``r(t)`` (fractional Ornstein-Uhlenbeck, generalized
  Cauchy, or a tabulated correlation with linear interpolation);
* ``IncrementVariance`` -- processes with stationary increments described by
  ``sigma^2(t) = Var(X(t) - X(0))`` (fBm, mixtures of independent fBms, and
  integrals of a stationary process).

Both reduce to a *structure function* ``D(t) = Var(X(s+t) - X(s))`` which is
all the Shepp field ``(X(s+tau) - X(s)) / sqrt(D(tau))`` depends on.  The
``Example21Field`` model is the two-process field
``(Y(tau+s) + X(s)) / sqrt(2)`` built from two independent stationary inputs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable

import numpy as np
from scipy import integrate

from .errors import (
    DegenerateVariance,
    FitFailure,
    OutOfTableRange,
    QuadratureFailure,
)

QUAD_RTOL = 1e-10


class CovFamily(str, Enum):
    FRACTIONAL_OU = "fou"
    GENERALIZED_CAUCHY = "cauchy"
    TABULATED = "tabulated"


class VarFamily(str, Enum):
    FBM = "fbm"
    MIXED_FBM = "mixed_fbm"
    INTEGRATED = "integrated"


# ---------------------------------------------------------------------------
# stationary inputs
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class StationaryCovariance:
    """Correlation model ``r(t) = 1 - a1 |t|^alpha (1 + o(1))`` near zero.

    Use the ``fractional_ou``, ``generalized_cauchy`` and ``tabulated``
    constructors rather than instantiating directly.
    """

    family: CovFamily
    alpha: float
    a1: float
    beta: float | None = None
    table_t: np.ndarray | None = field(default=None, repr=False)
    table_r: np.ndarray | None = field(default=None, repr=False)

    @classmethod
    def fractional_ou(cls, alpha):
        alpha = float(alpha)
        if not 0.0 < alpha <= 2.0:
            raise ValueError(f"fOU exponent must lie in (0, 2], got {alpha}")
        return cls(CovFamily.FRACTIONAL_OU, alpha, 1.0)

    @classmethod
    def generalized_cauchy(cls, alpha, beta):
        alpha, beta = float(alpha), float(beta)
        if not 0.0 < alpha <= 2.0:
            raise ValueError(f"Cauchy exponent must lie in (0, 2], got {alpha}")
        if beta <= 0.0:
            raise ValueError(f"Cauchy beta must be positive, got {beta}")
        # (1 + t^a)^-b = 1 - b t^a + O(t^2a)
        return cls(CovFamily.GENERALIZED_CAUCHY, alpha, beta, beta=beta)

    @classmethod
    def tabulated(cls, t, r):
        """Linear interpolation of sampled ``(t, r)`` pairs.

        The first knot must be ``(0, 1)``.  The interpolant is linear at the
        origin, so its local exponent is 1 and its local coefficient is the
        first slope ``(1 - r_1) / t_1``.  Evaluation beyond the last knot
        raises ``OutOfTableRange``.  A table that stays at 1 (``a1 = 0``) is
        accepted as an integrand for ``IncrementVariance.integrated`` but is
        degenerate as a Shepp input.
        """
        t = np.array(t, dtype=float)
        r = np.array(r, dtype=float)
        if t.ndim != 1 or t.shape != r.shape or t.size < 2:
            raise ValueError("table needs matching 1-d t and r with >= 2 knots")
        if t[0] != 0.0 or r[0] != 1.0:
            raise ValueError("table must start at (0, 1)")
        if np.any(np.diff(t) <= 0):
            raise ValueError("table t must be strictly increasing")
        if np.any(np.abs(r) > 1.0):
            raise ValueError("table values must lie in [-1, 1]")
        a1 = (1.0 - r[1]) / t[1]
        t.setflags(write=False)
        r.setflags(write=False)
        return cls(CovFamily.TABULATED, 1.0, float(a1), table_t=t, table_r=r)

    @property
    def t_max(self):
        return math.inf if self.table_t is None else float(self.table_t[-1])

    def __call__(self, t):
        t = np.abs(np.asarray(t, dtype=float))
        if self.family is CovFamily.FRACTIONAL_OU:
            return np.exp(-(t**self.alpha))
        if self.family is CovFamily.GENERALIZED_CAUCHY:
            return (1.0 + t**self.alpha) ** (-self.beta)
        if np.any(t > self.table_t[-1]):
            raise OutOfTableRange(
                f"lag {float(np.max(t)):g} beyond last knot {self.table_t[-1]:g}"
            )
        return np.interp(t, self.table_t, self.table_r)

    def structure(self, t):
        """``Var(X(s+t) - X(s)) = 2 (1 - r(t))``."""
        return 2.0 * (1.0 - self(t))

    def describe(self):
        if self.family is CovFamily.FRACTIONAL_OU:
            return f"fou(alpha={self.alpha:g})"
        if self.family is CovFamily.GENERALIZED_CAUCHY:
            return f"cauchy(alpha={self.alpha:g},beta={self.beta:g})"
        return f"tabulated(n={self.table_t.size},t_max={self.t_max:g})"


# ---------------------------------------------------------------------------
# stationary-increment inputs
# ---------------------------------------------------------------------------


def _integrated_variance_tabulated(zeta, t):
    # exact: r is piecewise linear, so 2 int_0^t (t-s) r(s) ds is piecewise cubic
    if t > zeta.table_t[-1]:
        raise OutOfTableRange(f"lag {t:g} beyond last knot {zeta.table_t[-1]:g}")
    knots = zeta.table_t[zeta.table_t < t]
    s0 = knots
    s1 = np.append(knots[1:], t)
    r0 = zeta(s0)
    r1 = zeta(s1)
    h = s1 - s0
    slope = np.divide(r1 - r0, h, out=np.zeros_like(h), where=h > 0)
    # int_{s0}^{s1} (t - s)(r0 + slope (s - s0)) ds with x = s - s0
    c = t - s0
    total = r0 * (c * h - h**2 / 2) + slope * (c * h**2 / 2 - h**3 / 3)
    return 2.0 * float(np.sum(total))


@dataclass(frozen=True, eq=False)
class IncrementVariance:
    """Variance ``sigma^2(t) = a2 |t|^alpha (1 + o(1))`` of a stationary-increment input."""

    family: VarFamily
    alpha: float
    a2: float
    hurst: float | None = None
    weights: tuple = ()
    hursts: tuple = ()
    zeta: StationaryCovariance | None = None
    _cache: dict = field(default_factory=dict, repr=False)

    @classmethod
    def fbm(cls, hurst):
        hurst = float(hurst)
        if not 0.0 < hurst < 1.0:
            raise ValueError(f"Hurst index must lie in (0, 1), got {hurst}")
        return cls(VarFamily.FBM, 2.0 * hurst, 1.0, hurst=hurst)

    @classmethod
    def mixed_fbm(cls, weights, hursts):
        weights = tuple(float(w) for w in weights)
        hursts = tuple(float(h) for h in hursts)
        if not weights or len(weights) != len(hursts):
            raise ValueError("weights and hursts must be non-empty and equal length")
        if any(w <= 0 for w in weights):
            raise ValueError("mixture weights must be positive")
        if abs(sum(w * w for w in weights) - 1.0) > 1e-12:
            raise ValueError(
                f"squared weights must sum to 1, got {sum(w * w for w in weights)!r}"
            )
        if any(not 0.0 < h < 1.0 for h in hursts):
            raise ValueError("every Hurst index must lie in (0, 1)")
        if any(h1 >= h2 for h1, h2 in zip(hursts, hursts[1:])):
            raise ValueError("Hurst indices must be strictly increasing")
        # smallest index dominates at the origin
        return cls(
            VarFamily.MIXED_FBM,
            2.0 * hursts[0],
            weights[0] ** 2,
            weights=weights,
            hursts=hursts,
        )

    @classmethod
    def integrated(cls, zeta):
        # r_zeta(0) = 1 gives sigma^2(t) = t^2 (1 + o(1))
        return cls(VarFamily.INTEGRATED, 2.0, 1.0, zeta=zeta)

    def _integrated_scalar(self, t):
        if t == 0.0:
            return 0.0
        hit = self._cache.get(t)
        if hit is not None:
            return hit
        if self.zeta.family is CovFamily.TABULATED:
            val = _integrated_variance_tabulated(self.zeta, t)
        else:
            zeta = self.zeta
            val, err, info = integrate.quad(
                lambda s: (t - s) * float(zeta(s)),
                0.0,
                t,
                epsabs=0.0,
                epsrel=QUAD_RTOL,
                limit=400,
                full_output=1,
            )[:3]
            if err > QUAD_RTOL * abs(val) and err > 1e-300:
                raise QuadratureFailure(
                    f"integrated variance at t={t:g}: error {err:.3g} vs value {val:.3g}"
                )
            val *= 2.0
        if len(self._cache) < 100_000:
            self._cache[t] = val
        return val

    def __call__(self, t):
        t = np.abs(np.asarray(t, dtype=float))
        if self.family is VarFamily.FBM:
            return t ** (2.0 * self.hurst)
        if self.family is VarFamily.MIXED_FBM:
            out = np.zeros_like(t)
            for w, h in zip(self.weights, self.hursts):
                out = out + w * w * t ** (2.0 * h)
            return out
        flat = np.array([self._integrated_scalar(float(x)) for x in t.ravel()])
        return flat.reshape(t.shape) if t.ndim else flat[0]

    structure = __call__

    def describe(self):
        if self.family is VarFamily.FBM:
            return f"fbm(H={self.hurst:g})"
        if self.family is VarFamily.MIXED_FBM:
            return f"mixed_fbm(weights={list(self.weights)},hursts={list(self.hursts)})"
        return f"integrated(zeta={self.zeta.describe()})"


@dataclass(frozen=True, eq=False)
class Example21Field:
    """Field ``(Y(tau+s) + X(s)) sigma(tau) / sqrt(2)`` with X, Y i.i.d. stationary.

    After standardization ``sigma`` cancels, so it only matters for the
    unstandardized values.
    """

    cov: StationaryCovariance
    sigma: Callable = field(default=lambda tau: np.ones_like(np.asarray(tau, float)))

    @property
    def alpha(self):
        return self.cov.alpha

    def describe(self):
        return f"example21(cov={self.cov.describe()})"


Model = StationaryCovariance | IncrementVariance | Example21Field


@dataclass(frozen=True)
class LocalStructure:
    """Exponent ``alpha`` and intensity ``g`` of the locally stationary field on ``[a, b]``."""

    alpha: float
    g: Callable
    a: float
    b: float


# ---------------------------------------------------------------------------
# operations
# ---------------------------------------------------------------------------


def eval_correlation(model: StationaryCovariance, t):
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise ValueError("correlation lag must be nonnegative")
    out = model(t)
    return float(out) if out.ndim == 0 else out


def eval_variance(model: IncrementVariance, t):
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise ValueError("variance argument must be nonnegative")
    out = np.asarray(model(t))
    return float(out) if out.ndim == 0 else out


def _check_window(a, b):
    if not 0.0 < a < b:
        raise ValueError(f"need 0 < a < b, got a={a}, b={b}")


def local_structure(model: Model, a, b, n_check=257) -> LocalStructure:
    """Return ``(alpha, g)`` for the standardized field built from ``model``.

    Raises ``DegenerateVariance`` if the increment variance vanishes
    somewhere on ``[a, b]`` (checked on ``n_check`` points).
    """
    _check_window(a, b)
    if isinstance(model, Example21Field):
        half = model.cov.a1 / 2.0
        return LocalStructure(model.cov.alpha, lambda tau: np.full_like(np.asarray(tau, float), half), a, b)
    probe = model.structure(np.linspace(a, b, n_check))
    if np.any(probe <= 0.0) or not np.all(np.isfinite(probe)):
        raise DegenerateVariance(f"increment variance vanishes on [{a}, {b}]")
    if isinstance(model, StationaryCovariance):
        a1 = model.a1

        def g(tau):
            return a1 / (2.0 * (1.0 - model(tau)))

    else:
        a2 = model.a2

        def g(tau):
            return a2 / (2.0 * model(tau))

    return LocalStructure(model.alpha, g, a, b)


def _structure_checked(model, tau):
    d = model.structure(tau)
    if np.any(d <= 0.0):
        raise DegenerateVariance("increment variance is zero at a window length")
    return d


def shepp_correlation(model, tau, s, tau2, s2):
    """Correlation of ``(X(s+tau) - X(s))/sd`` and ``(X(s2+tau2) - X(s2))/sd``.

    Vectorized over broadcastable array arguments.  ``Example21Field`` is
    dispatched to ``example21_correlation``.
    """
    if isinstance(model, Example21Field):
        return example21_correlation(model, tau, s, tau2, s2)
    tau, s, tau2, s2 = (np.asarray(x, dtype=float) for x in (tau, s, tau2, s2))
    d = model.structure
    lag = s - s2
    # grouped so that swapping the points negates every argument exactly
    cov = 0.5 * (d(lag + tau) + d(lag - tau2) - d(lag + (tau - tau2)) - d(lag))
    out = cov / np.sqrt(_structure_checked(model, tau) * _structure_checked(model, tau2))
    return float(out) if out.ndim == 0 else out


def example21_correlation(model: Example21Field, tau, s, tau2, s2):
    tau, s, tau2, s2 = (np.asarray(x, dtype=float) for x in (tau, s, tau2, s2))
    r = model.cov
    out = 0.5 * (r((s - s2) + (tau - tau2)) + r(s - s2))
    return float(out) if out.ndim == 0 else out


correlation = shepp_correlation


def _unstandardized_variance(model, tau, s):
    """``Var`` of the raw field at ``(tau, s)`` from the input's covariance.

    Computed by expanding the bilinear form of the input covariance, not by
    calling ``structure`` at the window length.
    """
    if isinstance(model, Example21Field):
        # (Var Y + Var X) sigma^2 / 2
        return 0.5 * (model.cov(0.0) + model.cov(0.0)) * model.sigma(tau) ** 2
    if isinstance(model, StationaryCovariance):
        # Var X(s+tau) + Var X(s) - 2 Cov
        return model(0.0) + model(0.0) - 2.0 * model(tau)
    v = model
    cov = 0.5 * (v(s + tau) + v(s) - v(tau))
    return v(s + tau) + v(s) - 2.0 * cov


@dataclass(frozen=True)
class A1Report:
    max_unit_variance_deviation: float
    max_s_dependence: float
    n_points: int

    @property
    def ok(self):
        return self.max_unit_variance_deviation <= 1e-12 and self.max_s_dependence <= 1e-9


def validate_a1(model, points) -> A1Report:
    """Check homogeneity of the field variance over ``(tau, s)`` grid points."""
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    tau, s = pts[:, 0], pts[:, 1]
    unit = np.abs(np.asarray(shepp_correlation(model, tau, s, tau, s)) - 1.0)
    raw = np.asarray(_unstandardized_variance(model, tau, s), dtype=float)
    ref = np.asarray(_unstandardized_variance(model, tau, np.zeros_like(s)), dtype=float)
    scale = np.maximum(np.abs(ref), 1e-300)
    return A1Report(float(unit.max()), float(np.max(np.abs(raw - ref) / scale)), len(pts))


def fit_local_exponent(model, a, b, k_range=(8, 20), max_residual=0.05):
    """Fit ``log(1 - r(tau,s; tau,s+h))`` against ``log h`` for ``h = 2^-k``.

    Returns ``(alpha_hat, coeff_hat)``.  Along a pure ``s``-shift the
    expansion is ``1 - r = 2 g(tau) h^alpha``, so ``coeff_hat`` estimates
    ``g`` at the reference window length ``(a + b) / 2``.
    """
    tau = 0.5 * (a + b)
    h = 2.0 ** -np.arange(k_range[0], k_range[1] + 1, dtype=float)
    rho = np.asarray(shepp_correlation(model, tau, 0.0, tau, h))
    gap = 1.0 - rho
    if np.any(gap <= 0):
        raise FitFailure("correlation not below 1 on the fit window")
    x, y = np.log(h), np.log(gap)
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    if np.sqrt(np.mean(resid**2)) > max_residual:
        raise FitFailure(f"log-log fit residual {np.sqrt(np.mean(resid**2)):.3g} too large")
    return float(slope), float(math.exp(intercept) / 2.0)


def berman_coefficient(
    model,
    v_grid,
    a,
    b,
    s_spacing=None,
    n_tau=51,
    horizon=10.0,
    max_lags=20_000,
):
    """Return ``[(v, delta(v) * ln v), ...]``.

    ``delta(v)`` is the largest ``|corr|`` over window lengths on an
    ``n_tau``-point grid of ``[a, b]`` and offsets ``|s - s'|`` in
    ``[v, horizon * v]`` on a grid of spacing ``s_spacing`` (default
    ``0.05 min(1, a)``).  All built-in fields are homogeneous in ``s``, so
    only the offset matters.  When the offset grid would exceed ``max_lags``
    points its spacing is widened to fit.
    """
    v_grid = np.asarray(v_grid, dtype=float)
    if np.any(v_grid <= 1.0):
        raise ValueError("v_grid entries must exceed 1")
    if np.any(np.diff(v_grid) <= 0):
        raise ValueError("v_grid must be increasing")
    ds = 0.05 * min(1.0, a) if s_spacing is None else float(s_spacing)
    lo, hi = v_grid[0], horizon * v_grid[-1]
    n_lags = int(math.floor((hi - lo) / ds)) + 1
    if n_lags > max_lags:
        n_lags = max_lags
        ds = (hi - lo) / (n_lags - 1)
    lags = lo + ds * np.arange(n_lags)
    taus = np.linspace(a, b, n_tau)
    t1, t2 = np.meshgrid(taus, taus, indexing="ij")
    t1, t2 = t1.ravel(), t2.ravel()
    peak = np.empty(n_lags)
    chunk = max(1, 200_000 // t1.size)
    for i in range(0, n_lags, chunk):
        lag = lags[i : i + chunk, None]
        # both signs of s - s' are covered by letting the two windows swap roles
        rho = np.abs(np.asarray(shepp_correlation(model, t1, lag, t2, 0.0)))
        peak[i : i + chunk] = rho.max(axis=1)
    out = []
    for v in v_grid:
        sel = (lags >= v - 1e-12) & (lags <= horizon * v + 1e-12)
        out.append((float(v), float(peak[sel].max() * math.log(v))))
    return out


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------


def model_to_dict(model) -> dict:
    if isinstance(model, StationaryCovariance):
        if model.family is CovFamily.FRACTIONAL_OU:
            return {"family": "fou", "alpha": model.alpha}
        if model.family is CovFamily.GENERALIZED_CAUCHY:
            return {"family": "cauchy", "alpha": model.alpha, "beta": model.beta}
        return {
            "family": "tabulated",
            "t": model.table_t.tolist(),
            "r": model.table_r.tolist(),
        }
    if isinstance(model, IncrementVariance):
        if model.family is VarFamily.FBM:
            return {"family": "fbm", "hurst": model.hurst}
        if model.family is VarFamily.MIXED_FBM:
            return {
                "family": "mixed_fbm",
                "weights": list(model.weights),
                "hursts": list(model.hursts),
            }
        return {"family": "integrated", "zeta": model_to_dict(model.zeta)}
    if isinstance(model, Example21Field):
        return {"family": "example21", "cov": model_to_dict(model.cov)}
    raise TypeError(f"not a model: {model!r}")


MODEL_KEYS = {
    "fou": {"alpha"},
    "cauchy": {"alpha", "beta"},
    "tabulated": {"t", "r"},
    "fbm": {"hurst"},
    "mixed_fbm": {"weights", "hursts"},
    "integrated": {"zeta"},
    "example21": {"cov"},
}


def model_from_dict(doc: dict):
    """Inverse of ``model_to_dict``; unknown or missing keys raise ``ValueError``."""
    doc = dict(doc)
    family = doc.pop("family", None)
    if family not in MODEL_KEYS:
        raise ValueError(f"unknown model family {family!r}; expected one of {sorted(MODEL_KEYS)}")
    extra = set(doc) - MODEL_KEYS[family]
    missing = MODEL_KEYS[family] - set(doc)
    if extra:
        raise ValueError(f"unknown keys for {family}: {sorted(extra)}")
    if missing:
        raise ValueError(f"missing keys for {family}: {sorted(missing)}")
    if family == "fou":
        return StationaryCovariance.fractional_ou(doc["alpha"])
    if family == "cauchy":
        return StationaryCovariance.generalized_cauchy(doc["alpha"], doc["beta"])
    if family == "tabulated":
        return StationaryCovariance.tabulated(doc["t"], doc["r"])
    if family == "fbm":
        return IncrementVariance.fbm(doc["hurst"])
    if family == "mixed_fbm":
        return IncrementVariance.mixed_fbm(doc["weights"], doc["hursts"])
    if family == "integrated":
        zeta = model_from_dict(doc["zeta"])
        if not isinstance(zeta, StationaryCovariance):
            raise ValueError("integrated zeta must be a stationary covariance")
        return IncrementVariance.integrated(zeta)
    cov = model_from_dict(doc["cov"])
    if not isinstance(cov, StationaryCovariance):
        raise ValueError("example21 cov must be a stationary covariance")
    return Example21Field(cov)
