"""Normalised filter substeps, innovations, and the reweighting bridge.

The substep tests replicate the documented update order with plain numpy
arithmetic (means taken before any substep, renormalisation after each) and
demand bitwise-level agreement; the bridge tests reuse the closed-form
likelihood of state-free scenarios from test_zakai.
"""

import numpy as np
import pytest

from jdfilter import (ParticleMeasure, TimeGrid, extract_observation_events,
                      model_from_config, normalize, reweight_ks_to_zakai,
                      run_ks, run_zakai, simulate_system)
from jdfilter.ks import ks_step
from jdfilter.pathsim import observation_dw_ref

from test_model import _config
from test_zakai import NO_OBS_DRIFT, _closed_form, _flat_config


def _uniform_state(points):
    pts = np.asarray(points, dtype=float)
    return ParticleMeasure(pts, np.full(pts.shape[0], 1.0 / pts.shape[0]),
                           normalized=True)


# ---------------------------------------------------------------------------
# single step


def test_ks_step_requires_normalized_state(tanh_spec):
    state = ParticleMeasure(np.zeros((4, 1)), np.full(4, 0.5))
    with pytest.raises(ValueError, match="normalised"):
        ks_step(tanh_spec, state, t=0.0, dt=0.01, dy_cont=np.array([0.0]),
                events=(np.empty(0), np.empty(0)),
                mutation_rng=np.random.default_rng(0))


def test_ks_step_state_free_factors_are_identity(constants_spec):
    # constant gain and constant thinning: every substep multiplies all
    # weights by the same factor, so the probability vector never moves
    state = _uniform_state(np.linspace(-2.0, 2.0, 16)[:, None])
    dt = 0.02
    new_state, info = ks_step(
        constants_spec, state, t=0.1, dt=dt, dy_cont=np.array([0.37]),
        events=(np.array([0.11]), np.array([0.8])),
        mutation_rng=np.random.default_rng(3))

    assert new_state.normalized
    assert np.all(new_state.weights == new_state.weights[0])
    np.testing.assert_allclose(info["prior_gain"], [0.5], rtol=1e-12)
    assert info["comp_mean"] == pytest.approx(0.6 * 2.0, rel=1e-12)
    assert info["event_factor"] == pytest.approx(0.6, rel=1e-12)
    # dw_ref = dy_cont here (zero-mean small-jump marks)
    np.testing.assert_allclose(info["dw_innov"], [0.37 - 0.5 * dt], atol=1e-12)


def test_ks_step_matches_replicated_substeps(tanh_spec):
    # independent replication of the three substeps for a handful of
    # particles: gain against the innovation, compensated jump drift, joint
    # event Bayes update, each renormalised, all at pre-mutation positions
    pts = np.array([[-0.8], [0.1], [0.9], [2.0], [-1.5]])
    w0 = np.array([0.1, 0.3, 0.2, 0.25, 0.15])
    state = ParticleMeasure(pts, w0, normalized=True)
    t, dt = 0.3, 0.02
    dy = np.array([0.21])
    ev_t = np.array([0.305, 0.317])
    ev_u = np.array([0.9, 0.25])

    new_state, info = ks_step(tanh_spec, state, t=t, dt=dt, dy_cont=dy,
                              events=(ev_t, ev_u),
                              mutation_rng=np.random.default_rng(7))

    g = np.tanh(pts[:, 0])
    lam = 0.5 + 0.3 * np.tanh(pts[:, 0])  # thinning ignores the mark
    comp = lam * 2.0
    gbar = w0 @ g
    cbar = w0 @ comp
    dw_ref = dy[0]  # zero-mean small-jump marks, unit obs dispersion
    dw_innov = dw_ref - gbar * dt

    w = w0 * (1.0 + (g - gbar) * dw_innov)
    w = w / w.sum()
    w = w * (1.0 - dt * (comp - cbar))
    w = w / w.sum()
    bayes = lam * lam  # two events, mark-free thinning
    event_factor = w @ bayes
    w = w * bayes
    w = w / w.sum()

    np.testing.assert_allclose(new_state.weights, w, rtol=1e-13)
    np.testing.assert_allclose(info["dw_innov"], [dw_innov], rtol=1e-12)
    np.testing.assert_allclose(info["prior_gain"], [gbar], rtol=1e-12)
    assert info["comp_mean"] == pytest.approx(cbar, rel=1e-12)
    assert info["event_factor"] == pytest.approx(event_factor, rel=1e-12)
    assert info["events"] == 2


def test_ks_step_sequential_events_equal_joint(tanh_spec):
    # one call with two events in the step versus the joint-product Bayes
    # rule applied directly: the sequential per-event normalisers telescope
    pts = np.array([[-1.0], [0.0], [0.5], [1.5]])
    state = _uniform_state(pts)
    lam = 0.5 + 0.3 * np.tanh(pts[:, 0])

    new_state, _ = ks_step(
        tanh_spec, state, t=0.0, dt=0.01, dy_cont=np.array([0.0]),
        events=(np.array([0.002, 0.008]), np.array([0.1, 0.9])),
        mutation_rng=np.random.default_rng(1))

    # with dy_cont = 0 the gain and drift substeps still act; replicate them
    g = np.tanh(pts[:, 0])
    comp = lam * 2.0
    w = state.weights * (1.0 + (g - state.weights @ g) * (0.0 - (state.weights @ g) * 0.01))
    w = w / w.sum()
    w = w * (1.0 - 0.01 * (comp - state.weights @ comp))
    w = w / w.sum()
    seq = w * lam
    seq = seq / seq.sum()
    seq = seq * lam
    seq = seq / seq.sum()
    np.testing.assert_allclose(new_state.weights, seq, rtol=1e-13)


# ---------------------------------------------------------------------------
# full runs


def test_run_ks_basic_contract(tanh_spec):
    grid = TimeGrid(1.0, 50)
    obs = extract_observation_events(simulate_system(tanh_spec, grid, seed=3))
    run = run_ks(tanh_spec, obs, 256, seed=11)

    assert run.kind == "ks"
    np.testing.assert_array_equal(run.mass, 1.0)
    assert all(s.normalized for s in run.states)
    assert run.diagnostics["clamp_count"] >= 0

    innov = run.aggregates["innovations"]
    assert innov.dw_innov.shape == (50, 1)
    assert innov.comp_mean.shape == (50,)
    assert int(innov.event_count.sum()) == obs.core_events().count
    # steps without events carry factor one
    assert np.all(innov.event_factor[innov.event_count == 0] == 1.0)
    qv = innov.quadratic_variation()
    assert qv.shape == (1, 1) and qv[0, 0] == pytest.approx(
        np.sum(innov.dw_innov ** 2))


def test_run_ks_shares_streams_with_zakai(tanh_spec):
    grid = TimeGrid(0.5, 25)
    obs = extract_observation_events(simulate_system(tanh_spec, grid, seed=6))
    ks = run_ks(tanh_spec, obs, 128, seed=13, store=[0])
    zk = run_zakai(tanh_spec, obs, 128, seed=13, store=[0])
    np.testing.assert_array_equal(ks.state_at(0).points, zk.state_at(0).points)

    again = run_ks(tanh_spec, obs, 128, seed=13, store=[0])
    np.testing.assert_array_equal(ks.mean, again.mean)
    np.testing.assert_array_equal(ks.ess, again.ess)


def test_run_ks_pi0_contract(tanh_spec):
    grid = TimeGrid(0.5, 10)
    obs = extract_observation_events(simulate_system(tanh_spec, grid, seed=6))
    with pytest.raises(ValueError, match="particles"):
        run_ks(tanh_spec, obs, 64, seed=1,
               pi0=_uniform_state(np.zeros((5, 1))))
    with pytest.raises(ValueError, match="normalised"):
        run_ks(tanh_spec, obs, 64, seed=1,
               pi0=ParticleMeasure(np.zeros((64, 1)), np.full(64, 2.0)))


def test_innovations_qv_near_horizon(tanh_spec):
    # under the physical dynamics the cumulative innovation is a Brownian
    # motion, so its quadratic variation concentrates at the horizon
    grid = TimeGrid(1.0, 100)
    qvs = []
    for i in range(32):
        obs = extract_observation_events(simulate_system(tanh_spec, grid, seed=300 + i))
        run = run_ks(tanh_spec, obs, 512, seed=900 + i, store=[0])
        qvs.append(run.aggregates["innovations"].quadratic_variation()[0, 0])
    qvs = np.asarray(qvs)
    se = qvs.std(ddof=1) / np.sqrt(qvs.size)
    assert abs(qvs.mean() - grid.horizon) < 4.0 * se, (qvs.mean(), se)


# ---------------------------------------------------------------------------
# reweighting bridge


def test_reweight_round_trip(tanh_spec):
    grid = TimeGrid(1.0, 50)
    obs = extract_observation_events(simulate_system(tanh_spec, grid, seed=3))
    run = run_ks(tanh_spec, obs, 500, seed=11, store=[0, 20, 50])
    rw = reweight_ks_to_zakai(tanh_spec, run, obs)

    assert rw.kind == "reweighted"
    assert rw.mass[0] == 1.0
    assert rw.aggregates["log_chi_increments"].shape == (50,)
    for node in (0, 20, 50):
        orig = run.state_at(node)
        back = normalize(rw.state_at(node))
        np.testing.assert_array_equal(back.points, orig.points)
        np.testing.assert_allclose(back.weights, orig.weights, rtol=1e-13)
        assert rw.state_at(node).total_mass == pytest.approx(
            rw.mass[node], rel=1e-12)


def test_reweight_chi_closed_form():
    # no continuous channel, constant thinning: chi is the closed-form
    # likelihood c^(events so far) exp((1-c) q t) at every node
    spec = model_from_config(_flat_config())
    grid = TimeGrid(1.0, 64)
    obs = extract_observation_events(simulate_system(spec, grid, seed=2))
    run = run_ks(spec, obs, 32, seed=5)
    rw = reweight_ks_to_zakai(spec, run, obs)

    counts = np.bincount(obs.core_events().step, minlength=grid.steps)
    expected = _closed_form(0.5, 2.0, counts, grid.nodes)
    np.testing.assert_allclose(rw.mass, expected, rtol=1e-10)


def test_reweight_tracks_zakai_mass(tanh_spec):
    # chi and the Zakai mass estimate the same observation functional; with
    # shared streams they stay within a few percent at this budget
    grid = TimeGrid(1.0, 100)
    obs = extract_observation_events(simulate_system(tanh_spec, grid, seed=3))
    zk = run_zakai(tanh_spec, obs, 4000, seed=11, store=[0])
    ks = run_ks(tanh_spec, obs, 4000, seed=11, store=[0])
    chi = reweight_ks_to_zakai(tanh_spec, ks, obs).mass
    assert chi[-1] == pytest.approx(zk.mass[-1], rel=0.15)


def test_reweight_input_validation(tanh_spec):
    grid = TimeGrid(0.5, 20)
    obs = extract_observation_events(simulate_system(tanh_spec, grid, seed=3))
    other = extract_observation_events(simulate_system(tanh_spec, grid, seed=4))
    run = run_ks(tanh_spec, obs, 64, seed=1)

    with pytest.raises(ValueError, match="innovations"):
        reweight_ks_to_zakai(tanh_spec, run, other)
    zk = run_zakai(tanh_spec, obs, 64, seed=1)
    with pytest.raises(ValueError, match="kind"):
        reweight_ks_to_zakai(tanh_spec, zk, obs)
    short = extract_observation_events(
        simulate_system(tanh_spec, TimeGrid(0.5, 10), seed=3))
    with pytest.raises(ValueError, match="grid"):
        reweight_ks_to_zakai(tanh_spec, run, short)


def test_ks_and_zakai_posteriors_agree(tanh_spec):
    # normalised posterior means from the two filters on one observation;
    # shared streams make the difference mostly scheme error
    grid = TimeGrid(1.0, 100)
    obs = extract_observation_events(simulate_system(tanh_spec, grid, seed=9))
    zk = run_zakai(tanh_spec, obs, 2000, seed=21)
    ks = run_ks(tanh_spec, obs, 2000, seed=21)
    band = 4.0 * (np.sqrt(zk.var[:, 0] / zk.ess) + np.sqrt(ks.var[:, 0] / ks.ess))
    assert np.all(np.abs(zk.mean[:, 0] - ks.mean[:, 0]) < band)
