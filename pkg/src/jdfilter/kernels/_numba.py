"""numba-compiled versions of the hot array kernels.

Semantics match ``_numpy`` kernel for kernel.  fastmath stays off so both
backends agree to rounding; loops are written for contiguous float64 input.
"""

from __future__ import annotations

import numpy as np
from numba import njit

_OPTS = {"cache": True, "nogil": True}


@njit(**_OPTS)
def euler_step(x, drift, disp, db, dt):
    b, n = x.shape
    d = db.shape[1]
    out = np.empty((b, n))
    for i in range(b):
        for j in range(n):
            acc = x[i, j] + drift[i, j] * dt
            for k in range(d):
                acc += disp[i, j, k] * db[i, k]
            out[i, j] = acc
    return out


@njit(**_OPTS)
def gauss_logw(g, dw, dt):
    r, n, m = g.shape
    out = np.empty((r, n))
    for i in range(r):
        for j in range(n):
            dot = 0.0
            sq = 0.0
            for k in range(m):
                gv = g[i, j, k]
                dot += gv * dw[i, k]
                sq += gv * gv
            out[i, j] = dot - 0.5 * dt * sq
    return out


@njit(**_OPTS)
def comp_exponent(lam, qw, dt):
    b, q = lam.shape
    qsum = 0.0
    for k in range(q):
        qsum += qw[k]
    out = np.empty(b)
    for i in range(b):
        acc = 0.0
        for k in range(q):
            acc += lam[i, k] * qw[k]
        out[i] = dt * (qsum - acc)
    return out


@njit(**_OPTS)
def ess_runs(w):
    r, n = w.shape
    out = np.empty(r)
    for i in range(r):
        s1 = 0.0
        s2 = 0.0
        for j in range(n):
            s1 += w[i, j]
            s2 += w[i, j] * w[i, j]
        out[i] = s1 * s1 / s2 if s2 > 0.0 else 0.0
    return out


@njit(**_OPTS)
def systematic_resample(w, u0, target):
    n = w.shape[0]
    csum = np.empty(n)
    acc = 0.0
    for i in range(n):
        acc += w[i]
        csum[i] = acc
    total = acc
    step = total / target
    idx = np.empty(target, dtype=np.int64)
    j = 0
    for i in range(target):
        pos = (u0 + i) * step
        while j < n - 1 and csum[j] <= pos:
            j += 1
        idx[i] = j
    return idx


@njit(**_OPTS)
def systematic_resample_runs(w, u0, mask):
    r, n = w.shape
    idx = np.empty((r, n), dtype=np.int64)
    for i in range(r):
        if mask[i]:
            idx[i] = systematic_resample(w[i], u0[i], n)
        else:
            for j in range(n):
                idx[i, j] = j
    return idx


@njit(**_OPTS)
def weighted_moments(x, w):
    r, n, k = x.shape
    mean = np.zeros((r, k))
    var = np.zeros((r, k))
    for i in range(r):
        tot = 0.0
        for j in range(n):
            tot += w[i, j]
        for j in range(n):
            wj = w[i, j]
            for c in range(k):
                mean[i, c] += wj * x[i, j, c]
        for c in range(k):
            mean[i, c] /= tot
        for j in range(n):
            wj = w[i, j]
            for c in range(k):
                diff = x[i, j, c] - mean[i, c]
                var[i, c] += wj * diff * diff
        for c in range(k):
            var[i, c] /= tot
    return mean, var
