"""Pure numpy reference implementations of the hot array kernels.

All kernels operate on float64 arrays with fixed layouts and no Python-object
inputs, so they can be swapped one for one with the numba versions.

Shape conventions:
    B  flat batch (paths, or runs*particles)
    R  independent runs, N particles per run
    n  signal dimension, d  signal Brownian dimension, m  observation dimension
    Q  mark quadrature nodes
"""

from __future__ import annotations

import numpy as np


def euler_step(x, drift, disp, db, dt):
    """One Euler-Maruyama update: x + drift*dt + disp @ db, rowwise.

    x (B, n), drift (B, n), disp (B, n, d), db (B, d) -> (B, n)
    """
    return x + drift * dt + np.einsum("bnd,bd->bn", disp, db)


def gauss_logw(g, dw, dt):
    """Log of the Gaussian likelihood factor per particle and run.

    g (R, N, m) sensitivities, dw (R, m) observation increments
    -> (R, N): g . dw - 0.5 |g|^2 dt
    """
    return np.einsum("rnm,rm->rn", g, dw) - 0.5 * dt * np.einsum("rnm,rnm->rn", g, g)


def comp_exponent(lam, qw, dt):
    """Jump compensator exponent dt * sum_q qw[q] * (1 - lam[..., q]).

    lam (B, Q) thinning values at quadrature marks, qw (Q,) -> (B,)
    """
    return dt * (qw.sum() - lam @ qw)


def ess_runs(w):
    """Effective sample size (sum w)^2 / sum w^2 per run.  w (R, N) -> (R,)"""
    s1 = w.sum(axis=1)
    s2 = (w * w).sum(axis=1)
    return np.where(s2 > 0.0, s1 * s1 / np.where(s2 > 0.0, s2, 1.0), 0.0)


def systematic_resample(w, u0, target):
    """Systematic resampling indices for one weight vector.

    w (N,) nonnegative with positive sum, u0 in [0,1), target output count.
    Returns (target,) int64 ancestor indices, nondecreasing.
    """
    n = w.shape[0]
    csum = np.cumsum(w)
    total = csum[-1]
    positions = (u0 + np.arange(target)) * (total / target)
    idx = np.searchsorted(csum, positions, side="right")
    return np.minimum(idx, n - 1).astype(np.int64)


def systematic_resample_runs(w, u0, mask):
    """Row-wise systematic resampling for the runs selected by ``mask``.

    w (R, N), u0 (R,), mask (R,) bool -> idx (R, N) int64.
    Unselected rows get the identity assignment.
    """
    r, n = w.shape
    idx = np.broadcast_to(np.arange(n, dtype=np.int64), (r, n)).copy()
    for i in np.flatnonzero(mask):
        idx[i] = systematic_resample(w[i], u0[i], n)
    return idx


def weighted_moments(x, w):
    """Weighted mean and variance per run and coordinate.

    x (R, N, n), w (R, N) with positive row sums -> mean (R, n), var (R, n).
    Variance is the weighted population variance about the weighted mean.
    """
    tot = w.sum(axis=1)
    mean = np.einsum("rnk,rn->rk", x, w) / tot[:, None]
    centered = x - mean[:, None, :]
    var = np.einsum("rnk,rn->rk", centered * centered, w) / tot[:, None]
    return mean, var
