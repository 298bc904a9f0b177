"""Weighted particle measures and operations on them.

A :class:`ParticleMeasure` is a finite positive measure: locations plus
nonnegative weights.  Unnormalised measures carry their total mass in the
weights (after resampling the particles are equal-weight and still sum to the
original mass); ``normalized=True`` asserts the weights sum to one.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from . import kernels
from ._rng import stream_rng

__all__ = [
    "ParticleMeasure",
    "MassDegeneracy",
    "integrate",
    "normalize",
    "resample",
    "effective_sample_size",
    "distance_bl",
    "default_probe_functions",
    "save_particles",
    "load_particles",
]

_NORM_TOL = 1e-12


class MassDegeneracy(RuntimeError):
    """Total mass is zero, negative or not finite."""


@dataclass(frozen=True)
class ParticleMeasure:
    points: np.ndarray   # (N, n)
    weights: np.ndarray  # (N,)
    normalized: bool = False

    def __post_init__(self):
        pts = np.ascontiguousarray(np.atleast_2d(np.asarray(self.points, dtype=float)))
        w = np.ascontiguousarray(np.asarray(self.weights, dtype=float).reshape(-1))
        if pts.shape[0] != w.shape[0]:
            raise ValueError(f"{pts.shape[0]} points but {w.shape[0]} weights")
        if pts.shape[0] == 0:
            raise ValueError("empty particle set")
        if not np.all(np.isfinite(pts)):
            raise ValueError("non-finite particle locations")
        if not np.all(np.isfinite(w)) or np.any(w < 0.0):
            raise ValueError("weights must be finite and nonnegative")
        if self.normalized and abs(w.sum() - 1.0) > _NORM_TOL:
            raise ValueError(f"normalized measure has mass {w.sum()!r}")
        pts.setflags(write=False)
        w.setflags(write=False)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "weights", w)

    @property
    def size(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    @property
    def total_mass(self) -> float:
        return float(self.weights.sum())


def integrate(mu: ParticleMeasure, phi: Callable) -> float:
    """Integral of ``phi`` against the (possibly unnormalised) measure."""
    vals = np.asarray(phi(mu.points), dtype=float).reshape(-1)
    if vals.shape[0] != mu.size:
        raise ValueError("phi must map (N, n) points to (N,) values")
    return float(vals @ mu.weights)


def normalize(mu: ParticleMeasure) -> ParticleMeasure:
    mass = mu.weights.sum()
    if not np.isfinite(mass) or mass <= 0.0:
        raise MassDegeneracy(f"cannot normalise measure with mass {mass!r}")
    return ParticleMeasure(mu.points, mu.weights / mass, normalized=True)


def effective_sample_size(mu: ParticleMeasure) -> float:
    """(sum w)^2 / sum w^2; equals N for equal weights."""
    return float(kernels.ess_runs(mu.weights[None, :])[0])


def resample(mu: ParticleMeasure, target_count: int, seed, scheme: str = "systematic") -> ParticleMeasure:
    """Draw an equal-weight particle set preserving total mass in expectation.

    ``seed`` is an integer (a dedicated resample stream is derived from it) or
    a ``numpy.random.Generator`` used directly.
    """
    if scheme != "systematic":
        raise ValueError(f"unknown resampling scheme {scheme!r}")
    if target_count < 1:
        raise ValueError("target_count must be positive")
    mass = mu.weights.sum()
    if not np.isfinite(mass) or mass <= 0.0:
        raise MassDegeneracy(f"cannot resample measure with mass {mass!r}")
    rng = seed if isinstance(seed, np.random.Generator) else stream_rng(int(seed), "resample")
    u0 = float(rng.random())
    idx = kernels.systematic_resample(mu.weights, u0, int(target_count))
    new_w = np.full(int(target_count), mass / target_count)
    return ParticleMeasure(mu.points[idx], new_w, normalized=mu.normalized)


# ---------------------------------------------------------------------------
# bounded-Lipschitz distance


def _ramp(center: float, scale: float, axis: int, slope_cap: float) -> Callable:
    s = max(scale, 1.0 / slope_cap)

    def phi(x):
        return np.clip((np.asarray(x, dtype=float)[..., axis] - center) / s, 0.0, 1.0)

    return phi


def _bell(center: float, scale: float, axis: int, slope_cap: float) -> Callable:
    # max slope of exp(-z^2/2s^2) is exp(-1/2)/s, so s >= exp(-1/2)/cap keeps
    # the Lipschitz constant at or below cap.
    s = max(scale, float(np.exp(-0.5)) / slope_cap)

    def phi(x):
        z = (np.asarray(x, dtype=float)[..., axis] - center) / s
        return np.exp(-0.5 * z * z)

    return phi


def default_probe_functions(box, count: int = 64) -> list[Callable]:
    """Default probe family: clamped-linear ramps and Gaussian bells placed
    on a grid over ``box``, all bounded by 1 with Lipschitz constant <= 1.

    For multivariate measures the atoms act on single coordinates in rotation,
    which keeps the Lipschitz bound exact while covering every dimension.
    """
    box = np.atleast_2d(np.asarray(box, dtype=float))
    n = box.shape[0]
    per_axis = max(1, count // (2 * n))
    probes: list[Callable] = []
    for axis in range(n):
        lo, hi = box[axis]
        span = max(hi - lo, 1e-9)
        centers = lo + (np.arange(per_axis) + 0.5) / per_axis * span
        scale = span / max(per_axis, 4)
        for c in centers:
            probes.append(_ramp(float(c), scale, axis, slope_cap=1.0))
            probes.append(_bell(float(c), max(scale, span / 10.0), axis, slope_cap=1.0))
    while len(probes) < count:
        probes.append(probes[len(probes) % max(1, 2 * n * per_axis)])
    return probes[:count]


def _joint_box(mu1: ParticleMeasure, mu2: ParticleMeasure) -> np.ndarray:
    pts = np.vstack([mu1.points, mu2.points])
    lo = pts.min(axis=0)
    hi = pts.max(axis=0)
    pad = 0.25 * (hi - lo) + 1e-6
    return np.stack([lo - pad, hi + pad], axis=1)


def distance_bl(mu1: ParticleMeasure, mu2: ParticleMeasure,
                probes: Sequence[Callable] | None = None) -> float:
    """Probe-based bounded-Lipschitz distance: max over probe functions of
    the difference of integrals.  With the default probe family this is a
    pseudometric minorising the true BL distance."""
    if mu1.dim != mu2.dim:
        raise ValueError("measures have different dimensions")
    if probes is None:
        probes = default_probe_functions(_joint_box(mu1, mu2))
    best = 0.0
    for phi in probes:
        best = max(best, abs(integrate(mu1, phi) - integrate(mu2, phi)))
    return best


# ---------------------------------------------------------------------------
# serialization


def save_particles(mu: ParticleMeasure, path, meta: dict | None = None) -> None:
    """CSV with one row per particle and a JSON header comment line."""
    header = {"count": int(mu.size), "dim": int(mu.dim),
              "normalized": bool(mu.normalized), "mass": float(mu.total_mass)}
    if meta:
        header.update(meta)
    cols = [f"x{i}" for i in range(mu.dim)] + ["w"]
    data = np.column_stack([mu.points, mu.weights])
    with open(path, "w") as fh:
        fh.write("# " + json.dumps(header, sort_keys=True) + "\n")
        fh.write(",".join(cols) + "\n")
        for row in data:
            fh.write(",".join(f"{v:.17g}" for v in row) + "\n")


def load_particles(path) -> tuple[ParticleMeasure, dict]:
    with open(path) as fh:
        first = fh.readline()
        if not first.startswith("# "):
            raise ValueError(f"{path}: missing JSON header line")
        header = json.loads(first[2:])
        fh.readline()  # column names
        data = np.loadtxt(fh, delimiter=",", ndmin=2)
    pts, w = data[:, :-1], data[:, -1]
    return ParticleMeasure(pts, w, normalized=bool(header["normalized"])), header
