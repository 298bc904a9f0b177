"""Benchmark the numba kernels against the pure numpy fallback.

Runs each hot kernel on filter-sized inputs under both backends, then times a
full unnormalised filter run end to end in a subprocess per backend (backend
choice is fixed at import time, so the end-to-end comparison needs a fresh
interpreter with JDFILTER_KERNELS set).

Usage: python benchmarks/bench_kernels.py [--quick] [--repeat R]
"""

from __future__ import annotations

import argparse
import os
import subprocess
import sys
import time

import numpy as np

from jdfilter.kernels import KERNEL_NAMES, get_backend


def _inputs(rng, quick):
    scale = 4 if quick else 1
    b = 200_000 // scale
    r, n = 200 // scale, 1000
    q, dim, m = 16, 2, 2
    w = rng.random((r, n)) + 1e-3
    return {
        "euler_step": (rng.normal(size=(b, dim)), rng.normal(size=(b, dim)),
                       rng.normal(size=(b, dim, dim)), rng.normal(size=(b, dim)),
                       1e-3),
        "gauss_logw": (rng.normal(size=(r, n, m)), rng.normal(size=(r, m)), 1e-3),
        "comp_exponent": (rng.random((b, q)), rng.random(q), 1e-3),
        "ess_runs": (w,),
        "systematic_resample": (w[0], 0.37, n),
        "systematic_resample_runs": (w, rng.random(r), np.ones(r, dtype=bool)),
        "weighted_moments": (rng.normal(size=(r, n, dim)), w),
    }


def _best_of(fn, args, repeat):
    fn(*args)  # warm-up; first numba call includes compilation
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def bench_kernels(repeat, quick):
    rng = np.random.default_rng(0)
    args = _inputs(rng, quick)
    numpy_mod = get_backend("numpy")
    try:
        numba_mod = get_backend("numba")
    except Exception as exc:
        print(f"numba backend unavailable ({exc}); nothing to compare")
        return
    print(f"{'kernel':28s} {'numpy':>10s} {'numba':>10s} {'speedup':>8s}")
    for name in KERNEL_NAMES:
        t_np = _best_of(getattr(numpy_mod, name), args[name], repeat)
        t_nb = _best_of(getattr(numba_mod, name), args[name], repeat)
        print(f"{name:28s} {t_np * 1e3:9.3f}ms {t_nb * 1e3:9.3f}ms "
              f"{t_np / t_nb:7.2f}x")


def _end_to_end_child():
    # runs under whatever JDFILTER_KERNELS says; prints one float
    from jdfilter import preset, run_zakai, simulate_system
    from jdfilter.pathsim import TimeGrid, extract_observation_events

    spec = preset("tanh_drift")
    grid = TimeGrid(spec.horizon, 400)
    obs = extract_observation_events(simulate_system(spec, grid, 7))
    run_zakai(spec, obs, 2000, 7)  # warm-up (JIT)
    t0 = time.perf_counter()
    run = run_zakai(spec, obs, 2000, 7)
    print(f"{time.perf_counter() - t0:.6f} {run.mass[-1]:.12g}")


def bench_end_to_end():
    print("\nend-to-end run_zakai (tanh_drift, N=2000, 400 steps):")
    results = {}
    for backend in ("numpy", "numba"):
        env = dict(os.environ, JDFILTER_KERNELS=backend)
        proc = subprocess.run([sys.executable, __file__, "--child"],
                              env=env, capture_output=True, text=True)
        if proc.returncode != 0:
            print(f"  {backend}: failed\n{proc.stderr}")
            continue
        seconds, mass = proc.stdout.split()
        results[backend] = float(seconds)
        print(f"  {backend:6s} {float(seconds) * 1e3:9.1f}ms  mass_T={mass}")
    if len(results) == 2:
        print(f"  speedup {results['numpy'] / results['numba']:.2f}x")


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--quick", action="store_true", help="smaller inputs")
    ap.add_argument("--repeat", type=int, default=5, help="timing repetitions")
    ap.add_argument("--child", action="store_true", help=argparse.SUPPRESS)
    args = ap.parse_args(argv)
    if args.child:
        _end_to_end_child()
        return
    bench_kernels(args.repeat, args.quick)
    bench_end_to_end()


if __name__ == "__main__":
    main()
