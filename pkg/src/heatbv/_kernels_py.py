"""Pure-numpy fallback for the compiled pair-sum kernels.

Same signatures and semantics as ``heatbv._kernels``; per-offset sums use a
pairwise tree that carries the TwoSum rounding errors, and the outer sum uses
``math.fsum``.
"""

from __future__ import annotations

import math

import numpy as np


_BATCH_ELEMS = 1 << 20


def _csum(x):
    """Compensated pairwise sums along the last axis (Kahan-level error)."""
    x = np.asarray(x, dtype=float)
    if x.shape[-1] == 0:
        return np.zeros(x.shape[:-1])
    err = np.zeros(x.shape[:-1])
    while x.shape[-1] > 1:
        if x.shape[-1] % 2:
            x = np.concatenate([x, np.zeros(x.shape[:-1] + (1,))], axis=-1)
        a, b = x[..., 0::2], x[..., 1::2]
        s = a + b
        bb = s - a
        err += np.sum((a - (s - bb)) + (b - bb), axis=-1)
        x = s
    return x[..., 0] + err


def _phi(a, b, ga, gb, p, mode):
    d = a - b
    if mode == 1:
        return d * (ga - gb)
    d = np.abs(d)
    if p == 1.0:
        return d
    if p == 2.0:
        return d * d
    return d**p


def offset_pair_sum(f, g, k, periodic, p, mode):
    f = np.asarray(f, dtype=float)
    g = np.asarray(g, dtype=float)
    k = np.asarray(k, dtype=float)
    n = f.shape[0]
    if g.shape[0] != n:
        raise ValueError("f and g must have equal length")
    mmax = k.shape[0] - 1
    if periodic and 2 * mmax > n:
        raise ValueError("periodic offsets must not exceed N/2")
    if not periodic:
        mmax = min(mmax, n - 1)
    ms = np.array([m for m in range(1, mmax + 1) if k[m] != 0.0], dtype=np.intp)
    if ms.size == 0:
        return 0.0
    idx = np.arange(n)
    terms = []
    step = max(1, _BATCH_ELEMS // n)
    for lo in range(0, ms.size, step):
        mb = ms[lo:lo + step, None]
        j = idx[None, :] + mb
        if periodic:
            j %= n
            phi = _phi(f[None, :], f[j], g[None, :], g[j], p, mode)
        else:
            # out-of-range partners are masked to zero
            live = j < n
            j = np.where(live, j, 0)
            phi = np.where(live, _phi(f[None, :], f[j], g[None, :], g[j], p, mode), 0.0)
        coef = np.where(periodic & (2 * mb[:, 0] == n), 1.0, 2.0)
        terms.extend(coef * k[mb[:, 0]] * _csum(phi))
    return math.fsum(terms)


def dense_pair_sum(K, row0, f, g, w, p, mode):
    K = np.asarray(K, dtype=float)
    f = np.asarray(f, dtype=float)
    g = np.asarray(g, dtype=float)
    w = np.asarray(w, dtype=float)
    nr, nc = K.shape
    if nc != f.shape[0] or nc != w.shape[0] or nc != g.shape[0]:
        raise ValueError("kernel block width must match the field length")
    if row0 < 0 or row0 + nr > nc:
        raise ValueError("row block out of range")
    rows = slice(row0, row0 + nr)
    phi = _phi(f[rows, None], f[None, :], g[rows, None], g[None, :], p, mode)
    return math.fsum(_csum(K * phi * w[None, :]) * w[rows])
