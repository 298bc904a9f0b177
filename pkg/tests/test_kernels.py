"""Backend parity and per-kernel oracles.

Every kernel is checked against a straightforward pure-Python rendition of
its contract, and the numba backend is checked against the numpy backend on
identical inputs (exactly where integer outputs are involved, to 1e-12 where
floating accumulation order may differ).
"""

import numpy as np
import pytest

from jdfilter.kernels import KERNEL_NAMES, get_backend

numpy_k = get_backend("numpy")
try:
    numba_k = get_backend("numba")
except Exception:  # pragma: no cover - toolchain without numba
    numba_k = None

needs_numba = pytest.mark.skipif(numba_k is None, reason="numba unavailable")


def _case(rng):
    b, r, n, q, dim, m = 64, 5, 40, 8, 2, 2
    w = rng.random((r, n)) + 1e-3
    return {
        "euler_step": (rng.normal(size=(b, dim)), rng.normal(size=(b, dim)),
                       rng.normal(size=(b, dim, dim)), rng.normal(size=(b, dim)),
                       0.01),
        "gauss_logw": (rng.normal(size=(r, n, m)), rng.normal(size=(r, m)), 0.01),
        "comp_exponent": (rng.random((b, q)), rng.random(q), 0.01),
        "ess_runs": (w,),
        "systematic_resample": (w[0], 0.37, n),
        "systematic_resample_runs": (w, rng.random(r), np.array([1, 0, 1, 1, 0], bool)),
        "weighted_moments": (rng.normal(size=(r, n, dim)), w),
    }


@needs_numba
@pytest.mark.parametrize("name", KERNEL_NAMES)
def test_backend_parity(name, rng):
    args = _case(rng)[name]
    a = numpy_k.__dict__[name](*args)
    b = numba_k.__dict__[name](*args)
    outs_a = a if isinstance(a, tuple) else (a,)
    outs_b = b if isinstance(b, tuple) else (b,)
    for xa, xb in zip(outs_a, outs_b):
        if np.issubdtype(np.asarray(xa).dtype, np.integer):
            assert np.array_equal(xa, xb)
        else:
            np.testing.assert_allclose(xa, xb, rtol=1e-12, atol=1e-12)


def test_euler_step_formula(rng):
    x = rng.normal(size=(7, 3))
    drift = rng.normal(size=(7, 3))
    disp = rng.normal(size=(7, 3, 2))
    db = rng.normal(size=(7, 2))
    out = numpy_k.euler_step(x, drift, disp, db, 0.25)
    for i in range(7):
        np.testing.assert_allclose(out[i], x[i] + 0.25 * drift[i] + disp[i] @ db[i],
                                   rtol=1e-14)


def test_gauss_logw_formula(rng):
    g = rng.normal(size=(3, 5, 2))
    dw = rng.normal(size=(3, 2))
    dt = 0.05
    out = numpy_k.gauss_logw(g, dw, dt)
    for r in range(3):
        for i in range(5):
            want = g[r, i] @ dw[r] - 0.5 * dt * g[r, i] @ g[r, i]
            np.testing.assert_allclose(out[r, i], want, rtol=1e-13)


def test_comp_exponent_formula(rng):
    lam = rng.random((4, 6))
    qw = rng.random(6)
    out = numpy_k.comp_exponent(lam, qw, 0.1)
    want = 0.1 * np.array([np.sum(qw * (1.0 - lam[i])) for i in range(4)])
    np.testing.assert_allclose(out, want, rtol=1e-13)


def test_ess_edge_cases():
    w = np.ones((1, 50))
    assert numpy_k.ess_runs(w)[0] == pytest.approx(50.0)
    one_hot = np.zeros((1, 50))
    one_hot[0, 3] = 2.0
    assert numpy_k.ess_runs(one_hot)[0] == pytest.approx(1.0)
    assert numpy_k.ess_runs(np.zeros((1, 4)))[0] == 0.0


def test_systematic_resample_enumeration():
    # hand enumeration: csum=[.5,.75,1.], positions=.25*(0.1+[0,1,2,3])
    # = [.025,.275,.525,.775] -> indices [0,0,1,2]
    idx = numpy_k.systematic_resample(np.array([0.5, 0.25, 0.25]), 0.1, 4)
    assert idx.tolist() == [0, 0, 1, 2]


def test_systematic_resample_counts(rng):
    # systematic scheme: count_i is floor or ceil of target * p_i
    for _ in range(20):
        w = rng.random(8) + 1e-6
        p = w / w.sum()
        target = 1000
        idx = numpy_k.systematic_resample(w, float(rng.random()), target)
        counts = np.bincount(idx, minlength=8)
        assert np.all(counts >= np.floor(target * p))
        assert np.all(counts <= np.ceil(target * p) + 1)


def test_systematic_resample_delta_mixture():
    # near-degenerate weights: essentially every ancestor is particle 0
    w = np.array([0.9999, 0.0001])
    for u0 in (0.0, 0.25, 0.5, 0.9):
        idx = numpy_k.systematic_resample(w, u0, 100)
        assert np.sum(idx == 1) <= 1


def test_systematic_resample_runs_masking(rng):
    w = rng.random((4, 30)) + 1e-3
    u0 = rng.random(4)
    mask = np.array([True, False, True, False])
    idx = numpy_k.systematic_resample_runs(w, u0, mask)
    assert np.array_equal(idx[1], np.arange(30))
    assert np.array_equal(idx[3], np.arange(30))
    for i in (0, 2):
        assert np.array_equal(idx[i], numpy_k.systematic_resample(w[i], u0[i], 30))


def test_weighted_moments_against_numpy(rng):
    x = rng.normal(size=(3, 40, 2))
    w = rng.random((3, 40)) + 1e-3
    mean, var = numpy_k.weighted_moments(x, w)
    for r in range(3):
        want_mean = np.average(x[r], axis=0, weights=w[r])
        want_var = np.average((x[r] - want_mean) ** 2, axis=0, weights=w[r])
        np.testing.assert_allclose(mean[r], want_mean, rtol=1e-12)
        np.testing.assert_allclose(var[r], want_var, rtol=1e-12)


@needs_numba
def test_backend_determinism(rng):
    args = _case(rng)["systematic_resample_runs"]
    for mod in (numpy_k, numba_k):
        a = mod.systematic_resample_runs(*args)
        b = mod.systematic_resample_runs(*args)
        assert np.array_equal(a, b)
