"""Compare the compiled and numpy kernels on representative workloads.

    python3 benchmarks/bench_kernels.py [--repeat 5]

Prints best-of-``repeat`` wall times and the speedup, and checks that both
backends return the same numbers.
"""

import argparse
import time

import numpy as np

from sheppext import _kernels_py
from sheppext.fieldsim import SheppGrid, _plan

try:
    from sheppext import _ckernels
except ImportError:  # extension not built
    _ckernels = None


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def grid_case(rows=256):
    # Brownian Shepp field on [0.5, 1] x [0, 10] at spacing 1/50
    from sheppext.models import IncrementVariance

    grid = SheppGrid.from_mesh(0.5, 1.0, 10.0, 0.02)
    model = IncrementVariance.fbm(0.5)
    offs, stride, w, ca, cb = _plan(model, grid, grid.path_step)
    rng = np.random.default_rng(0)
    A = np.cumsum(rng.standard_normal((rows, grid.path_len)), axis=1)
    args = (A, A, offs, 0, stride, grid.n_s, w, ca, cb)
    return f"grid_max_batch {rows} x {grid.n_points} pts", args


def pickands_case(rows=256, n=4097):
    rng = np.random.default_rng(1)
    B = np.cumsum(rng.standard_normal((rows, n)), axis=1) / 64.0
    powers = np.arange(n) / 64.0
    shift = rng.integers(0, n, rows)
    return f"pickands_stats {rows} x {n}", (B, powers, shift, np.sqrt(2.0), [1, 2, 4, 8])


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    if _ckernels is None:
        print("compiled extension not available; only the numpy backend can be timed")
    cases = [("grid_max_batch",) + grid_case(), ("pickands_stats",) + pickands_case()]
    print(f"{'case':40s} {'numpy [s]':>10s} {'cython [s]':>11s} {'speedup':>8s}  agree")
    for fname, label, fargs in cases:
        t_py, r_py = best_of(lambda: getattr(_kernels_py, fname)(*fargs), args.repeat)
        if _ckernels is None:
            print(f"{label:40s} {t_py:10.4f} {'-':>11s} {'-':>8s}")
            continue
        t_c, r_c = best_of(lambda: getattr(_ckernels, fname)(*fargs), args.repeat)
        if isinstance(r_py, tuple):
            same = all(np.allclose(x, y, rtol=0, atol=1e-12) for x, y in zip(r_py, r_c))
        else:
            same = np.array_equal(r_py, r_c)
        print(f"{label:40s} {t_py:10.4f} {t_c:11.4f} {t_py / t_c:8.1f}  {same}")


if __name__ == "__main__":
    main()
