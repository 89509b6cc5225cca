"""Numpy implementations of the Monte Carlo kernels.

Trial ``t`` draws from ``Philox(key=seed | t << 64)``; results match the
compiled kernels exactly.
"""

import numpy as np

_MASK64 = (1 << 64) - 1


def _stream(seed, stream):
    return np.random.Generator(np.random.Philox(key=(seed & _MASK64) | (stream << 64)))


def _labels(cdf, u):
    return np.minimum(np.searchsorted(cdf, u, side="right"), len(cdf) - 1)


def uniforms(seed, stream, n):
    return _stream(seed, stream).random(n)


def draw_labels(cdf, n, seed, stream):
    return _labels(np.asarray(cdf), _stream(seed, stream).random(n)).astype(np.int64)


def trial_counts(cdf, n, seed, t0, t1):
    cdf = np.asarray(cdf)
    k = len(cdf)
    out = np.zeros((t1 - t0, k), dtype=np.int64)
    for row, t in enumerate(range(t0, t1)):
        out[row] = np.bincount(_labels(cdf, _stream(seed, t).random(n)), minlength=k)
    return out


def exceedance_counts(cdf, q, n, eps, seed, t0, t1):
    counts = trial_counts(cdf, n, seed, t0, t1)
    dev = np.abs(counts / float(n) - np.asarray(q))
    return (dev > eps).sum(axis=0).astype(np.int64)


def l1_failures(cdf, q, alpha, eps, seed, t0, t1):
    counts = trial_counts(cdf, alpha, seed, t0, t1)
    l1 = np.zeros(len(counts))
    # accumulate column by column so the summation order matches the compiled loop
    for j, qj in enumerate(q):
        l1 += np.abs(counts[:, j] / float(alpha) - qj)
    return int((l1 > eps).sum())
