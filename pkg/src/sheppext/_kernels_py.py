"""Pure-numpy reference kernels; same contract as the compiled ``_ckernels``."""

import numpy as np


def grid_max_batch(A, B, a_off, b_off, stride, n_s, w, ca, cb):
    """Row-wise ``max_{j,l} w[j] (ca A[a_off[j] + l stride] + cb B[b_off + l stride])``."""
    A = np.ascontiguousarray(A, dtype=np.float64)
    B = np.ascontiguousarray(B, dtype=np.float64)
    stop = b_off + (n_s - 1) * stride + 1
    base = cb * B[:, b_off:stop:stride]
    out = np.full(A.shape[0], -np.inf)
    for off, wj in zip(np.asarray(a_off), np.asarray(w, dtype=np.float64)):
        vals = ca * A[:, off : off + (n_s - 1) * stride + 1 : stride] + base
        np.maximum(out, wj * vals.max(axis=1), out=out)
    return out


def pickands_stats(B, powers, shift, scale, strides):
    """Maxima and log-sum-exp of the drifted path ``scale B(t_i) + drift_i``.

    ``drift_i = powers[shift] - powers[|i - shift|]`` when ``shift >= 0`` and
    ``-powers[i]`` when ``shift < 0``.  Returns ``(maxima, lse)`` where
    ``maxima[r, m]`` is the maximum over indices that are multiples of
    ``strides[m]`` and ``lse[r]`` is the log-sum-exp over all indices.
    """
    B = np.asarray(B, dtype=np.float64)
    powers = np.asarray(powers, dtype=np.float64)
    shift = np.asarray(shift, dtype=np.int64)
    n = B.shape[1]
    idx = np.arange(n)
    k = np.maximum(shift, 0)[:, None]
    drift = np.where(
        shift[:, None] >= 0,
        powers[k] - powers[np.abs(idx[None, :] - k)],
        -powers[None, :n],
    )
    W = scale * B + drift
    maxima = np.column_stack([W[:, ::st].max(axis=1) for st in strides])
    top = W.max(axis=1)
    lse = top + np.log(np.exp(W - top[:, None]).sum(axis=1))
    return maxima, lse
