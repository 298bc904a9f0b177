"""Hot array kernels with selectable backend.

The numba backend is used when available; set ``JDFILTER_KERNELS=numpy`` to
force the pure numpy path (or ``JDFILTER_KERNELS=numba`` to insist on numba
and fail loudly if it cannot compile).  Both backends implement identical
semantics, which ``tests/test_kernels.py`` checks side by side.
"""

from __future__ import annotations

import os
import warnings
from types import ModuleType

from . import _numpy

_ENV_VAR = "JDFILTER_KERNELS"

KERNEL_NAMES = (
    "euler_step",
    "gauss_logw",
    "comp_exponent",
    "ess_runs",
    "systematic_resample",
    "systematic_resample_runs",
    "weighted_moments",
)


def get_backend(name: str) -> ModuleType:
    """Return the kernel module for ``name`` in {'numpy', 'numba'}."""
    if name == "numpy":
        return _numpy
    if name == "numba":
        from . import _numba

        return _numba
    raise ValueError(f"unknown kernel backend {name!r}")


def _select_default() -> tuple[str, ModuleType]:
    requested = os.environ.get(_ENV_VAR, "").strip().lower()
    if requested == "numpy":
        return "numpy", _numpy
    if requested == "numba":
        return "numba", get_backend("numba")
    if requested not in ("", "auto"):
        raise ValueError(f"{_ENV_VAR} must be 'numpy', 'numba' or 'auto', got {requested!r}")
    try:
        return "numba", get_backend("numba")
    except Exception as exc:  # pragma: no cover - depends on local toolchain
        warnings.warn(f"numba kernels unavailable ({exc!r}); falling back to numpy")
        return "numpy", _numpy


BACKEND_NAME, _active = _select_default()

euler_step = _active.euler_step
gauss_logw = _active.gauss_logw
comp_exponent = _active.comp_exponent
ess_runs = _active.ess_runs
systematic_resample = _active.systematic_resample
systematic_resample_runs = _active.systematic_resample_runs
weighted_moments = _active.weighted_moments

__all__ = ["BACKEND_NAME", "KERNEL_NAMES", "get_backend", *KERNEL_NAMES]
