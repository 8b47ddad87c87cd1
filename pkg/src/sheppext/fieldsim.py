"""Exact Gaussian path simulation and the standardized Shepp field on grids.

Paths are sampled on a uniform grid ``t_i = i h`` by circulant embedding of
the covariance sequence (fBm via its stationary increments).  A Shepp grid

    tau_j = b - j dtau,   s_l = l ds

is *commensurate* with the path grid when ``b``, ``dtau`` and ``ds`` are
integer multiples of ``h``; field values are then exact increments of the
path and no interpolation is involved.

Every path is a pure function of a 64-bit seed.  Replication ``k`` of a
Monte Carlo run with master seed ``S`` uses seed ``sub_seed(S, k)``, so a
replication can be reproduced in isolation with the ``simulate_*`` helpers.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field
from fractions import Fraction
from functools import reduce

import numpy as np
from scipy import linalg

from . import kernels
from .errors import CholeskyFailure, EmbeddingFailure, IncommensurateGrid
from .models import (
    Example21Field,
    IncrementVariance,
    StationaryCovariance,
    VarFamily,
    model_to_dict,
    shepp_correlation,
)
from .results import McEstimate, config_digest
from .seeding import path_rng, sub_seed

EMBED_TOL = -1e-9
CHOLESKY_JITTER = 1e-12
ORACLE_JITTER = 1e-10
MAX_CHOLESKY_N = 8192
MAX_PATH_POINTS = 50_000_000
INTEGRATED_SUBGRID = 8
# stream tag for the Cholesky oracle, kept apart from replication counters
ORACLE_STREAM = 0x0AC1E5
# stream tags for secondary paths inside one replication
SECOND_PATH_STREAM = 1


# ---------------------------------------------------------------------------
# grids
# ---------------------------------------------------------------------------


def _fraction(x, what):
    f = Fraction(float(x)).limit_denominator(10**6)
    if abs(float(f) - x) > 8 * np.finfo(float).eps * max(1.0, abs(x)):
        raise IncommensurateGrid(f"{what}={x!r} is not a ratio of small integers")
    return f


def _fraction_gcd(fracs):
    def g(p, q):
        return Fraction(math.gcd(p.numerator * q.denominator, q.numerator * p.denominator),
                        p.denominator * q.denominator)

    return reduce(g, fracs)


@dataclass(frozen=True)
class SheppGrid:
    """Rectangular ``(tau, s)`` grid on ``[a, b] x [0, T]``."""

    a: float
    b: float
    T: float
    n_tau: int
    n_s: int
    ds: float = field(init=False)
    dtau: float = field(init=False)
    path_step: float = field(init=False)

    def __post_init__(self):
        if not 0.0 < self.a < self.b:
            raise ValueError(f"need 0 < a < b, got a={self.a}, b={self.b}")
        if self.T <= 0:
            raise ValueError(f"horizon must be positive, got {self.T}")
        if self.n_tau < 2 or self.n_s < 2:
            raise ValueError("need at least two points on each axis")
        ds = self.T / (self.n_s - 1)
        dtau = (self.b - self.a) / (self.n_tau - 1)
        step = _fraction_gcd(
            [_fraction(self.b, "b"), _fraction(ds, "ds"), _fraction(dtau, "dtau")]
        )
        object.__setattr__(self, "ds", ds)
        object.__setattr__(self, "dtau", dtau)
        object.__setattr__(self, "path_step", float(step))
        if self.path_len > MAX_PATH_POINTS:
            raise IncommensurateGrid(
                f"common path step {float(step):g} needs {self.path_len} path points"
            )

    @classmethod
    def from_mesh(cls, a, b, T, q):
        """Finest grid with equal spacing ``h <= q`` in both axes.

        ``h`` is the largest unit fraction of ``gcd(a, b, T)`` not exceeding
        ``q``, so the grid is always commensurate.
        """
        unit = _fraction_gcd([_fraction(a, "a"), _fraction(b, "b"), _fraction(T, "T")])
        k = max(1, math.ceil(float(unit) / q - 1e-12))
        h = unit / k
        n_tau = round(float((_fraction(b, "b") - _fraction(a, "a")) / h)) + 1
        n_s = round(float(_fraction(T, "T") / h)) + 1
        return cls(a, b, T, n_tau, n_s)

    @property
    def tau(self):
        return self.b - np.arange(self.n_tau) * self.dtau

    @property
    def s(self):
        return np.arange(self.n_s) * self.ds

    @property
    def n_points(self):
        return self.n_tau * self.n_s

    @property
    def path_len(self):
        return round((self.T + self.b) / self.path_step) + 1

    def indices(self, step=None):
        """``(tau_offsets, s_stride)`` in units of a path step ``step``."""
        step = self.path_step if step is None else step
        ratio_b = self.b / step
        ratio_t = self.dtau / step
        ratio_s = self.ds / step
        for name, r in (("b", ratio_b), ("dtau", ratio_t), ("ds", ratio_s)):
            if abs(r - round(r)) > 1e-9 * max(1.0, r):
                raise IncommensurateGrid(f"{name} is not a multiple of path step {step:g}")
        offs = round(ratio_b) - np.arange(self.n_tau, dtype=np.intp) * round(ratio_t)
        return offs, round(ratio_s)

    def points(self):
        """All ``(tau, s)`` pairs, tau-major (row ``j`` of ``values``)."""
        t, s = np.meshgrid(self.tau, self.s, indexing="ij")
        return np.column_stack([t.ravel(), s.ravel()])

    def to_dict(self):
        return {"a": self.a, "b": self.b, "T": self.T, "n_tau": self.n_tau, "n_s": self.n_s}


def common_step(grids):
    """Path step shared by grids on the same ``(a, b, T)`` domain."""
    grids = list(grids)
    first = grids[0]
    for g in grids[1:]:
        if (g.a, g.b, g.T) != (first.a, first.b, first.T):
            raise IncommensurateGrid("grids sharing a path must share a, b and T")
    return float(_fraction_gcd([_fraction(g.path_step, "step") for g in grids]))


# ---------------------------------------------------------------------------
# samplers
# ---------------------------------------------------------------------------


class _CirculantSampler:
    """Stationary Gaussian sequence with autocovariance ``cov[0..n-1]``."""

    def __init__(self, cov):
        cov = np.asarray(cov, dtype=float)
        self.n = n = cov.size
        self.method = "circulant"
        self.min_eigenvalue = None
        if n == 1:
            self._chol = np.sqrt(np.array([[cov[0]]]))
            self.method = "direct"
            return
        row = np.concatenate([cov, cov[-2:0:-1]])
        lam = np.fft.fft(row).real
        self.m = row.size
        self.min_eigenvalue = float(lam.min())
        if self.min_eigenvalue >= EMBED_TOL:
            self._scale = np.sqrt(np.clip(lam, 0.0, None) / self.m)
            return
        if n > MAX_CHOLESKY_N:
            raise EmbeddingFailure(
                f"circulant embedding has eigenvalue {self.min_eigenvalue:.3g} and "
                f"n={n} is too large for the Cholesky fallback"
            )
        try:
            self._chol = np.linalg.cholesky(linalg.toeplitz(cov) + CHOLESKY_JITTER * np.eye(n))
        except np.linalg.LinAlgError as exc:
            raise EmbeddingFailure(
                f"circulant embedding failed (min eigenvalue {self.min_eigenvalue:.3g}) "
                "and the Cholesky fallback is not positive definite"
            ) from exc
        self.method = "cholesky"

    def draw(self, rngs):
        if self.method == "circulant":
            m = self.m
            z = np.empty((len(rngs), m), dtype=complex)
            for i, rng in enumerate(rngs):
                w = rng.standard_normal(2 * m)
                z[i].real = w[:m]
                z[i].imag = w[m:]
            return np.fft.fft(self._scale * z, axis=1).real[:, : self.n]
        z = np.stack([rng.standard_normal(self.n) for rng in rngs])
        return z @ self._chol.T


class StationaryPathSampler:
    def __init__(self, model: StationaryCovariance, n, dt):
        if n < 2 or dt <= 0:
            raise ValueError("need n >= 2 and dt > 0")
        self.n, self.dt = n, dt
        self._core = _CirculantSampler(model(np.arange(n) * dt))
        self.method = self._core.method

    def draw(self, seeds):
        return self._core.draw([path_rng(s) for s in seeds])


def fgn_autocovariance(hurst, n, dt):
    k = np.arange(n, dtype=float)
    h2 = 2.0 * hurst
    return 0.5 * (np.abs(k + 1) ** h2 - 2 * k**h2 + np.abs(k - 1) ** h2) * dt**h2


class FbmPathSampler:
    """Davies-Harte: embed the fGn autocovariance, then cumulate; ``B(0) = 0``."""

    def __init__(self, hurst, n, dt):
        if not 0.0 < hurst < 1.0:
            raise ValueError(f"Hurst index must lie in (0, 1), got {hurst}")
        if n < 2 or dt <= 0:
            raise ValueError("need n >= 2 and dt > 0")
        self.hurst, self.n, self.dt = hurst, n, dt
        try:
            self._core = _CirculantSampler(fgn_autocovariance(hurst, n - 1, dt))
        except EmbeddingFailure as exc:
            raise EmbeddingFailure(f"fGn embedding failed for H={hurst}: {exc}") from exc
        self.method = self._core.method

    def draw_rngs(self, rngs):
        inc = self._core.draw(rngs)
        out = np.zeros((len(rngs), self.n))
        np.cumsum(inc, axis=1, out=out[:, 1:])
        return out

    def draw(self, seeds):
        return self.draw_rngs([path_rng(s) for s in seeds])


class MixedFbmPathSampler:
    """Sum of independent fBms; component 0 uses the path seed, component i
    uses ``sub_seed(seed, i)``."""

    def __init__(self, weights, hursts, n, dt):
        self.weights = tuple(weights)
        self.parts = [FbmPathSampler(h, n, dt) for h in hursts]
        self.n, self.dt = n, dt
        self.method = self.parts[0].method

    def draw(self, seeds):
        out = self.weights[0] * self.parts[0].draw(seeds)
        for i, (w, part) in enumerate(zip(self.weights[1:], self.parts[1:]), start=1):
            out += w * part.draw([sub_seed(s, i) for s in seeds])
        return out


class IntegratedPathSampler:
    """Trapezoidal integral of a stationary path sampled ``m`` times finer.

    The trapezoid rule has bias ``O((dt/m)^2)`` in the increment variance.
    """

    def __init__(self, zeta: StationaryCovariance, n, dt, m=INTEGRATED_SUBGRID):
        if m < 4:
            raise ValueError("sub-grid factor must be at least 4")
        self.n, self.dt, self.m = n, dt, m
        self._fine = StationaryPathSampler(zeta, (n - 1) * m + 1, dt / m)
        self.method = self._fine.method

    def draw(self, seeds):
        z = self._fine.draw(seeds)
        h = self.dt / self.m
        fine = np.zeros_like(z)
        np.cumsum(0.5 * h * (z[:, 1:] + z[:, :-1]), axis=1, out=fine[:, 1:])
        return fine[:, :: self.m]


def make_sampler(model, n, dt, m=INTEGRATED_SUBGRID):
    """Path sampler for any input model on ``t = 0, dt, ..., (n-1) dt``."""
    if isinstance(model, StationaryCovariance):
        return StationaryPathSampler(model, n, dt)
    if isinstance(model, Example21Field):
        return StationaryPathSampler(model.cov, n, dt)
    if model.family is VarFamily.FBM:
        return FbmPathSampler(model.hurst, n, dt)
    if model.family is VarFamily.MIXED_FBM:
        return MixedFbmPathSampler(model.weights, model.hursts, n, dt)
    return IntegratedPathSampler(model.zeta, n, dt, m)


@dataclass(frozen=True, eq=False)
class GaussianPath:
    values: np.ndarray
    dt: float
    seed: int
    method: str


def simulate_stationary(model: StationaryCovariance, n, dt, seed) -> GaussianPath:
    """Zero-mean unit-variance stationary path at ``0, dt, ..., (n-1) dt``.

    ``method`` records whether circulant embedding succeeded or the dense
    Cholesky fallback was used.
    """
    sampler = StationaryPathSampler(model, n, dt)
    return GaussianPath(sampler.draw([seed])[0], dt, int(seed), sampler.method)


def simulate_fbm(hurst, n, dt, seed) -> GaussianPath:
    sampler = FbmPathSampler(hurst, n, dt)
    return GaussianPath(sampler.draw([seed])[0], dt, int(seed), sampler.method)


def simulate_mixed_fbm(weights, hursts, n, dt, seed) -> GaussianPath:
    IncrementVariance.mixed_fbm(weights, hursts)  # validates
    sampler = MixedFbmPathSampler(weights, hursts, n, dt)
    return GaussianPath(sampler.draw([seed])[0], dt, int(seed), sampler.method)


def simulate_integrated(zeta, n, dt, seed, m=INTEGRATED_SUBGRID) -> GaussianPath:
    sampler = IntegratedPathSampler(zeta, n, dt, m)
    return GaussianPath(sampler.draw([seed])[0], dt, int(seed), sampler.method)


# ---------------------------------------------------------------------------
# fields
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class FieldSample:
    """Standardized field values; ``values[j, l]`` sits at ``(tau_j, s_l)``."""

    grid: SheppGrid
    values: np.ndarray
    seed: int
    model_id: str

    def to_csv(self, path):
        t, s = np.meshgrid(self.grid.tau, self.grid.s, indexing="ij")
        with open(path, "w") as fh:
            fh.write("tau,s,value\n")
            for row in zip(t.ravel(), s.ravel(), self.values.ravel()):
                fh.write("%r,%r,%r\n" % tuple(float(x) for x in row))

    def to_binary(self, path):
        """Little-endian dump: header then ``n_tau * n_s`` float64, row-major.

        Header (``<8sIIQddd``): magic ``b"SHPFLD01"``, n_tau (u32), n_s (u32),
        seed (u64), a, b, T (f64).
        """
        g = self.grid
        with open(path, "wb") as fh:
            fh.write(BINARY_HEADER.pack(BINARY_MAGIC, g.n_tau, g.n_s, self.seed, g.a, g.b, g.T))
            fh.write(np.ascontiguousarray(self.values, dtype="<f8").tobytes())

    @classmethod
    def from_binary(cls, path, model_id=""):
        with open(path, "rb") as fh:
            head = fh.read(BINARY_HEADER.size)
            magic, n_tau, n_s, seed, a, b, T = BINARY_HEADER.unpack(head)
            if magic != BINARY_MAGIC:
                raise ValueError(f"{path}: not a field dump")
            values = np.frombuffer(fh.read(), dtype="<f8").reshape(n_tau, n_s)
        return cls(SheppGrid(a, b, T, n_tau, n_s), values.astype(float), seed, model_id)


BINARY_MAGIC = b"SHPFLD01"
BINARY_HEADER = struct.Struct("<8sIIQddd")


def window_sd(model, taus):
    """Standard deviation of the raw increment for each window length."""
    if isinstance(model, Example21Field):
        # standardized two-process field: sd of Y + X is sqrt(2)
        return np.full(len(taus), math.sqrt(2.0))
    return np.sqrt(np.asarray(model.structure(np.asarray(taus, dtype=float))))


def _plan(model, grid, step):
    offs, stride = grid.indices(step)
    w = 1.0 / window_sd(model, grid.tau)
    if isinstance(model, Example21Field):
        return offs, stride, w, 1.0, 1.0
    return offs, stride, w, 1.0, -1.0


def build_shepp_field(path, grid: SheppGrid, model, seed=None) -> FieldSample:
    """``values[j, l] = (X(s_l + tau_j) - X(s_l)) / sd(tau_j)``.

    ``path`` is a ``GaussianPath`` (or an array with ``dt = grid.path_step``)
    covering ``[0, T + b]`` on a grid commensurate with ``grid``.
    """
    if isinstance(path, GaussianPath):
        values, dt, seed = path.values, path.dt, path.seed if seed is None else seed
    else:
        values, dt = np.asarray(path, dtype=float), grid.path_step
    return _field_from_paths(values, values, grid, model, dt, seed)


def _field_from_paths(A, B, grid, model, dt, seed):
    offs, stride, w, ca, cb = _plan(model, grid, dt)
    need = int(offs.max()) + (grid.n_s - 1) * stride + 1
    if A.size < need:
        raise IncommensurateGrid(f"path has {A.size} points, grid needs {need}")
    l_idx = np.arange(grid.n_s) * stride
    vals = (ca * A[offs[:, None] + l_idx[None, :]] + cb * B[l_idx][None, :]) * w[:, None]
    return FieldSample(grid, vals, -1 if seed is None else int(seed), model.describe())


def build_example21_field(cov: StationaryCovariance, sigma, grid: SheppGrid, seed) -> FieldSample:
    """Standardized ``(Y(tau+s) + X(s)) sigma(tau) / sqrt(2)`` with X, Y independent.

    X uses ``seed`` and Y uses ``sub_seed(seed, 1)``.  The standardized value
    does not depend on ``sigma``; it is accepted for the raw-field contract.
    """
    model = Example21Field(cov) if sigma is None else Example21Field(cov, sigma)
    sampler = StationaryPathSampler(cov, grid.path_len, grid.path_step)
    X = sampler.draw([seed])[0]
    Y = sampler.draw([sub_seed(seed, SECOND_PATH_STREAM)])[0]
    return _field_from_paths(Y, X, grid, model, grid.path_step, seed)


def simulate_field(model, grid: SheppGrid, seed) -> FieldSample:
    """One field sample for any model, on its own path of the grid's step."""
    if isinstance(model, Example21Field):
        return build_example21_field(model.cov, model.sigma, grid, seed)
    sampler = make_sampler(model, grid.path_len, grid.path_step)
    path = GaussianPath(sampler.draw([seed])[0], grid.path_step, int(seed), sampler.method)
    return build_shepp_field(path, grid, model)


def field_max(sample: FieldSample) -> float:
    return float(np.max(sample.values))


class FieldMaxima:
    """Batched maxima of the standardized field over one or more grids.

    All grids share one path per replication, simulated at their common path
    step, so maxima over nested grids are pathwise ordered.
    """

    def __init__(self, model, grids, m=INTEGRATED_SUBGRID):
        self.model = model
        self.grids = list(grids)
        self.step = common_step(self.grids)
        g0 = self.grids[0]
        self.n = round((g0.T + g0.b) / self.step) + 1
        base = model.cov if isinstance(model, Example21Field) else model
        self.sampler = make_sampler(base, self.n, self.step, m)
        self.plans = [_plan(model, g, self.step) for g in self.grids]

    def chunk_size(self):
        return max(1, min(512, 4_000_000 // self.n))

    def compute(self, seeds):
        """Array of shape ``(len(seeds), len(grids))``."""
        seeds = list(seeds)
        A = self.sampler.draw(seeds)
        if isinstance(self.model, Example21Field):
            B = A
            A = self.sampler.draw([sub_seed(s, SECOND_PATH_STREAM) for s in seeds])
        else:
            B = A
        A = np.ascontiguousarray(A)
        B = np.ascontiguousarray(B)
        out = np.empty((len(seeds), len(self.grids)))
        for i, ((offs, stride, w, ca, cb), g) in enumerate(zip(self.plans, self.grids)):
            out[:, i] = kernels.grid_max_batch(A, B, offs, 0, stride, g.n_s, w, ca, cb)
        return out


def replication_seeds(seed, n, start=0):
    return [sub_seed(seed, k) for k in range(start, start + n)]


def simulate_maxima(model, grids, n, seed, threads=1, m=INTEGRATED_SUBGRID):
    """Field maxima of ``n`` replications, shape ``(n, len(grids))``.

    Independent of ``threads``: replication ``k`` always uses
    ``sub_seed(seed, k)`` and lands in row ``k``.
    """
    engine = FieldMaxima(model, grids, m)
    size = engine.chunk_size()
    starts = list(range(0, n, size))
    out = np.empty((n, len(engine.grids)))

    def work(start):
        cnt = min(size, n - start)
        out[start : start + cnt] = engine.compute(replication_seeds(seed, cnt, start))

    if threads > 1 and len(starts) > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(threads) as pool:
            list(pool.map(work, starts))
    else:
        for st in starts:
            work(st)
    return out


# ---------------------------------------------------------------------------
# dense oracle
# ---------------------------------------------------------------------------

ORACLE_MAX_POINTS = 64


def field_correlation_matrix(model, grid: SheppGrid):
    pts = grid.points()
    t1, s1 = pts[:, 0][:, None], pts[:, 1][:, None]
    t2, s2 = pts[:, 0][None, :], pts[:, 1][None, :]
    return np.asarray(shepp_correlation(model, t1, s1, t2, s2))


def oracle_sample_max(model, grid: SheppGrid, n, u, seed, chunk=20_000):
    """Exceedance fraction of ``max Z > u`` by dense Cholesky sampling.

    Independent of the path/FFT pipeline: the exact correlation matrix of the
    grid points comes from ``shepp_correlation``.  ``u`` may be a scalar or a
    sequence; the same draws serve every threshold.
    """
    if grid.n_points > ORACLE_MAX_POINTS:
        raise ValueError(f"oracle grid has {grid.n_points} > {ORACLE_MAX_POINTS} points")
    corr = field_correlation_matrix(model, grid)
    eye = np.eye(len(corr))
    try:
        L = np.linalg.cholesky(corr)
    except np.linalg.LinAlgError:
        try:
            L = np.linalg.cholesky(corr + ORACLE_JITTER * eye)
        except np.linalg.LinAlgError as exc:
            raise CholeskyFailure("field correlation matrix is not numerically PSD") from exc
    us = np.atleast_1d(np.asarray(u, dtype=float))
    rng = path_rng(sub_seed(seed, ORACLE_STREAM))
    counts = np.zeros(us.size, dtype=np.int64)
    done = 0
    while done < n:
        cnt = min(chunk, n - done)
        mx = (rng.standard_normal((cnt, len(corr))) @ L.T).max(axis=1)
        counts += (mx[:, None] > us[None, :]).sum(axis=0)
        done += cnt
    digest = config_digest(
        {"op": "oracle", "model": model_to_dict(model), "grid": grid.to_dict(), "n": n, "seed": seed}
    )
    res = [McEstimate.from_count(int(c), n, uu, digest, seed) for c, uu in zip(counts, us)]
    return res[0] if np.ndim(u) == 0 else res
