"""Unnormalised particle filter and its Monte Carlo cross-checks.

The filter propagates weighted particles for the signal and multiplies each
particle's weight by the same likelihood factors that
:func:`likelihood_process` integrates along a known signal path:

* a Gaussian factor exp(g . dW_ref - |g|^2 dt / 2) with g = sigma2^-1
  obs_drift evaluated at the particle before mutation,
* the thinning intensity at every core jump event of the observation,
* the compensator factor exp(integral of (1 - thinning) against the core
  mark measure times dt).

Weights are kept normalised per run with the log of the total mass carried
separately, so the unnormalised measure is exp(log_mass) times the weighted
empirical measure.  Systematic resampling (optionally triggered by effective
sample size) preserves the mass.

``ks_oracle`` estimates the same unnormalised moments by plain Monte Carlo
over fresh signal paths against the fixed observation; it shares no particle
machinery with the filter and serves as its independent check.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import kernels
from ._rng import stream_rng
from .measures import MassDegeneracy, ParticleMeasure
from .model import ModelSpec
from .pathsim import (CHANNEL_CORE, BatchObservations, ObservationRecord,
                      TimeGrid, batch_dw_ref, observation_dw_ref,
                      observation_to_batch)

__all__ = [
    "LikelihoodProcess",
    "FilterRun",
    "zakai_step",
    "run_zakai",
    "likelihood_process",
    "inverse_likelihood_batch",
    "ks_oracle",
    "ks_oracle_table",
]

_POLICIES = ("ess", "always", "never")


# ---------------------------------------------------------------------------
# likelihood along a known signal path


@dataclass(frozen=True)
class LikelihoodProcess:
    """Pathwise likelihood of the physical dynamics against the reference.

    ``values[k]`` is the likelihood at node k (``values[0] == 1``); the log
    increments are split into the Brownian part and the jump part.
    """

    grid: TimeGrid
    log_cont: np.ndarray  # (K,)
    log_jump: np.ndarray  # (K,)

    @property
    def values(self) -> np.ndarray:
        out = np.empty(self.grid.steps + 1)
        out[0] = 1.0
        out[1:] = np.exp(np.cumsum(self.log_cont + self.log_jump))
        return out

    @property
    def inverse_values(self) -> np.ndarray:
        out = np.empty(self.grid.steps + 1)
        out[0] = 1.0
        out[1:] = np.exp(-np.cumsum(self.log_cont + self.log_jump))
        return out


def _core_event_arrays(spec: ModelSpec, obs: ObservationRecord):
    ev = obs.core_events()
    order = np.argsort(ev.step, kind="stable")
    return ev.time[order], ev.mark[order], ev.step[order]


def likelihood_process(spec: ModelSpec, x_path: np.ndarray,
                       obs: ObservationRecord) -> LikelihoodProcess:
    """Likelihood factors along ``x_path`` given the observation.

    Left-limit convention throughout: factors over (t_k, t_{k+1}] evaluate
    the signal at node k, and event factors use the exact event time with the
    node-k signal value.
    """
    grid = obs.grid
    k1, dt = grid.steps, grid.dt
    x_path = np.asarray(x_path, dtype=float)
    if x_path.shape[0] != k1 + 1:
        raise ValueError("signal path does not match the observation grid")

    dw_ref = observation_dw_ref(spec, obs)
    ev_time, ev_mark, ev_step = _core_event_arrays(spec, obs)
    qw = spec.marks.core_weights

    log_cont = np.empty(k1)
    log_jump = np.empty(k1)
    lo = 0
    for k in range(k1):
        t = k * dt
        xk = x_path[k][None, :]
        g = spec.obs_sensitivity(t, xk)[0]
        log_cont[k] = g @ dw_ref[k] - 0.5 * dt * (g @ g)
        lam_q = spec.thinning_at_quad(t, xk)[0]
        acc = float(kernels.comp_exponent(lam_q[None, :], qw, dt)[0])
        hi = lo
        while hi < ev_step.shape[0] and ev_step[hi] == k:
            hi += 1
        if hi > lo:
            lam = np.asarray(spec.thinning(
                ev_time[lo:hi], np.broadcast_to(x_path[k], (hi - lo, x_path.shape[1])),
                ev_mark[lo:hi]), dtype=float)
            acc += float(np.sum(np.log(lam)))
        log_jump[k] = acc
        lo = hi
    return LikelihoodProcess(grid=grid, log_cont=log_cont, log_jump=log_jump)


# ---------------------------------------------------------------------------
# filter run container


@dataclass
class FilterRun:
    """Output of a filter: per-node diagnostics, particle states at stored
    nodes, and whatever per-step aggregates the flavour needs downstream."""

    kind: str                      # "zakai", "ks" or "reweighted"
    grid: TimeGrid
    particle_count: int
    seed: int
    node_indices: np.ndarray       # (C,) nodes with stored states
    states: list[ParticleMeasure]  # len C
    mass: np.ndarray               # (K+1,) total mass at every node
    ess: np.ndarray                # (K+1,)
    mean: np.ndarray               # (K+1, n) normalised posterior mean
    var: np.ndarray                # (K+1, n) normalised posterior variance
    aggregates: dict = field(default_factory=dict)
    diagnostics: dict = field(default_factory=dict)

    def state_at(self, node: int) -> ParticleMeasure:
        pos = np.flatnonzero(self.node_indices == node)
        if pos.size == 0:
            raise KeyError(f"no stored state at node {node}; have {self.node_indices.tolist()}")
        return self.states[int(pos[0])]


def _resolve_store_nodes(store, k1: int) -> np.ndarray:
    if store == "all":
        return np.arange(k1 + 1)
    if store == "auto":
        c = min(k1, 10)
        return np.unique(np.round(np.linspace(0, k1, c + 1)).astype(int))
    nodes = np.unique(np.asarray(store, dtype=int))
    if nodes.size == 0 or nodes.min() < 0 or nodes.max() > k1:
        raise ValueError(f"store nodes out of range for {k1} steps: {nodes}")
    return nodes


# ---------------------------------------------------------------------------
# core batched machinery


def _weight_log_factors(spec: ModelSpec, x: np.ndarray, t: float, dt: float,
                        dw_ref: np.ndarray, ev_run, ev_time, ev_mark,
                        skip_compensator: bool) -> np.ndarray:
    """Log likelihood factor per particle over one step.

    x (R, N, n) pre-mutation positions, dw_ref (R, m), events of this step.
    """
    r, n_p, _ = x.shape
    g = np.asarray(spec.obs_sensitivity(t, x), dtype=float)
    logf = kernels.gauss_logw(np.ascontiguousarray(g), np.ascontiguousarray(dw_ref), dt)
    if not skip_compensator:
        lam_q = spec.thinning_at_quad(t, x.reshape(r * n_p, -1))
        logf += kernels.comp_exponent(np.ascontiguousarray(lam_q),
                                      spec.marks.core_weights, dt).reshape(r, n_p)
    if ev_run.shape[0]:
        lam = np.asarray(spec.thinning(
            ev_time[:, None], x[ev_run], ev_mark[:, None]), dtype=float)
        np.add.at(logf, ev_run, np.log(lam))
    return logf


def _mutate(spec: ModelSpec, x: np.ndarray, t: float, dt: float,
            rng: np.random.Generator) -> np.ndarray:
    r, n_p, n = x.shape
    db = rng.standard_normal((r, n_p, spec.dim_bm)) * np.sqrt(dt)
    flat = x.reshape(r * n_p, n)
    drift = np.asarray(spec.drift(t, flat), dtype=float)
    disp = np.asarray(spec.dispersion(t, flat), dtype=float)
    out = kernels.euler_step(np.ascontiguousarray(flat), np.ascontiguousarray(drift),
                             np.ascontiguousarray(disp),
                             np.ascontiguousarray(db.reshape(r * n_p, -1)), dt)
    return out.reshape(r, n_p, n)


def zakai_core(spec: ModelSpec, batch: BatchObservations, particle_count: int,
               seed: int, *, resample_policy: str = "ess",
               resample_threshold: float = 0.5, skip_jump_compensator: bool = False,
               mu0_points: np.ndarray | None = None,
               functionals: Sequence[Callable] = (),
               checkpoint_nodes: np.ndarray | None = None,
               want_moments: bool = False,
               store_nodes: np.ndarray | None = None) -> dict:
    """Run the unnormalised filter on every observation of ``batch``.

    Returns arrays keyed by name; see ``run_zakai`` for the single-run view.
    ``functionals`` are evaluated against the unnormalised measure at
    ``checkpoint_nodes``.
    """
    if resample_policy not in _POLICIES:
        raise ValueError(f"resample_policy must be one of {_POLICIES}")
    grid = batch.grid
    k1, dt = grid.steps, grid.dt
    r, n_p, n = batch.count, particle_count, spec.dim_signal
    if dt * spec.marks.core_mass >= 1.0:
        raise ValueError("grid too coarse for the jump activity: dt * core mass >= 1")

    rng_mut = stream_rng(seed, "mutation")
    rng_res = stream_rng(seed, "resample")
    if mu0_points is None:
        x = spec.initial_law.sampler(stream_rng(seed, "init_particles"), r * n_p)
        x = x.reshape(r, n_p, n)
    else:
        x = np.array(mu0_points, dtype=float).reshape(r, n_p, n)
    w = np.full((r, n_p), 1.0 / n_p)
    log_mass = np.zeros(r)

    dw_ref = batch_dw_ref(spec, batch)
    checkpoint_nodes = (np.zeros(0, dtype=int) if checkpoint_nodes is None
                        else np.asarray(checkpoint_nodes, dtype=int))
    func_vals = np.empty((r, checkpoint_nodes.size, len(functionals)))
    states: list[tuple[np.ndarray, np.ndarray, np.ndarray]] = []
    store_nodes = np.zeros(0, dtype=int) if store_nodes is None else store_nodes

    mass = np.empty((r, k1 + 1))
    ess = np.empty((r, k1 + 1))
    mean = np.empty((r, k1 + 1, n)) if want_moments else None
    var = np.empty((r, k1 + 1, n)) if want_moments else None
    resample_count = 0

    def record(node: int) -> None:
        mass[:, node] = np.exp(log_mass)
        ess[:, node] = kernels.ess_runs(w)
        if want_moments:
            mn, vr = kernels.weighted_moments(x, w)
            mean[:, node], var[:, node] = mn, vr
        for ci in np.flatnonzero(checkpoint_nodes == node):
            for fi, fn in enumerate(functionals):
                vals = np.asarray(fn(x), dtype=float).reshape(r, n_p)
                func_vals[:, ci, fi] = np.exp(log_mass) * np.einsum("rn,rn->r", vals, w)
        if node in store_nodes:
            states.append((x.copy(), w.copy(), log_mass.copy()))

    record(0)
    for k in range(k1):
        t = k * dt
        ev = slice(batch.ev_ptr[k], batch.ev_ptr[k + 1])
        logf = _weight_log_factors(spec, x, t, dt, dw_ref[:, k, :],
                                   batch.ev_run[ev], batch.ev_time[ev],
                                   batch.ev_mark[ev], skip_jump_compensator)
        w = w * np.exp(logf)
        step_mass = w.sum(axis=1)
        if not np.all(np.isfinite(step_mass)) or np.any(step_mass <= 0.0):
            raise MassDegeneracy(f"weight collapse at step {k} (t={t:.6g})")
        log_mass = log_mass + np.log(step_mass)
        w = w / step_mass[:, None]

        x = _mutate(spec, x, t, dt, rng_mut)

        u0 = rng_res.random(r)
        if resample_policy == "never":
            trigger = np.zeros(r, dtype=bool)
        elif resample_policy == "always":
            trigger = np.ones(r, dtype=bool)
        else:
            trigger = kernels.ess_runs(w) < resample_threshold * n_p
        if np.any(trigger):
            idx = kernels.systematic_resample_runs(w, u0, trigger)
            rows = np.flatnonzero(trigger)
            for i in rows:
                x[i] = x[i, idx[i]]
            w[rows] = 1.0 / n_p
            resample_count += int(rows.size)
        record(k + 1)

    return {
        "mass": mass, "ess": ess, "mean": mean, "var": var,
        "func_vals": func_vals, "checkpoint_nodes": checkpoint_nodes,
        "states": states, "store_nodes": store_nodes,
        "resample_count": resample_count,
    }


# ---------------------------------------------------------------------------
# public single-run interface


def _materialize(x, w, log_mass) -> ParticleMeasure:
    scale = float(np.exp(log_mass[0]))
    return ParticleMeasure(x[0], w[0] * scale,
                           normalized=bool(abs(scale * w[0].sum() - 1.0) <= 1e-12))


def run_zakai(spec: ModelSpec, obs: ObservationRecord, particle_count: int,
              seed: int, *, mu0: ParticleMeasure | None = None,
              resample_policy: str = "ess", resample_threshold: float = 0.5,
              store: str | Sequence[int] = "auto",
              skip_jump_compensator: bool = False) -> FilterRun:
    """Unnormalised filter along one observation record.

    ``mu0`` must be a normalised particle measure of size ``particle_count``;
    by default the initial law of the model is sampled on a dedicated stream.
    """
    if particle_count < 1:
        raise ValueError("particle_count must be positive")
    if mu0 is not None:
        if mu0.size != particle_count:
            raise ValueError(f"mu0 has {mu0.size} particles, expected {particle_count}")
        if not mu0.normalized:
            raise ValueError("mu0 must be normalised (the filter tracks mass itself)")
    batch = observation_to_batch(spec, obs)
    store_nodes = _resolve_store_nodes(store, obs.grid.steps)
    out = zakai_core(
        spec, batch, particle_count, seed,
        resample_policy=resample_policy, resample_threshold=resample_threshold,
        skip_jump_compensator=skip_jump_compensator,
        mu0_points=None if mu0 is None else mu0.points[None, :, :],
        want_moments=True, store_nodes=store_nodes)
    states = [_materialize(*s) for s in out["states"]]
    return FilterRun(
        kind="zakai", grid=obs.grid, particle_count=particle_count, seed=seed,
        node_indices=store_nodes, states=states,
        mass=out["mass"][0], ess=out["ess"][0],
        mean=out["mean"][0], var=out["var"][0],
        diagnostics={"resample_count": out["resample_count"],
                     "resample_policy": resample_policy,
                     "skip_jump_compensator": bool(skip_jump_compensator)},
    )


def zakai_step(spec: ModelSpec, state: ParticleMeasure, t: float, dt: float,
               dy_cont: np.ndarray, events, mutation_rng: np.random.Generator,
               *, skip_jump_compensator: bool = False) -> tuple[ParticleMeasure, dict]:
    """One filter step: weight by the observation increment and this step's
    core events (left-limit positions), then mutate.  Resampling is a
    separate concern (:func:`jdfilter.measures.resample`)."""
    if isinstance(events, tuple):
        ev_time, ev_mark = (np.asarray(a, dtype=float).reshape(-1) for a in events)
    else:
        core = events.select((events.channel == CHANNEL_CORE) & events.accepted)
        ev_time, ev_mark = core.time, core.mark
    drift = spec.small_jump_mean_drift(t)
    dw_ref = spec.obs_disp_inv(t) @ (np.asarray(dy_cont, dtype=float) + drift * dt)
    x = state.points[None, :, :]
    ev_run = np.zeros(ev_time.shape[0], dtype=np.int64)
    logf = _weight_log_factors(spec, x, t, dt, dw_ref[None, :],
                               ev_run, ev_time, ev_mark, skip_jump_compensator)[0]
    w = state.weights * np.exp(logf)
    mass = w.sum()
    if not np.isfinite(mass) or mass <= 0.0:
        raise MassDegeneracy(f"weight collapse in step at t={t:.6g}")
    x_new = _mutate(spec, x, t, dt, mutation_rng)[0]
    new_state = ParticleMeasure(x_new, w, normalized=False)
    info = {"mass": float(mass),
            "ess": float(kernels.ess_runs(w[None, :])[0]),
            "events": int(ev_time.shape[0])}
    return new_state, info


# ---------------------------------------------------------------------------
# Monte Carlo cross-checks


def inverse_likelihood_batch(spec: ModelSpec, grid: TimeGrid, path_count: int,
                             seed: int) -> np.ndarray:
    """Inverse likelihood at the horizon for ``path_count`` physical paths.

    Simulates the signal and its thinned jump acceptances in one fused batch
    and integrates the inverse likelihood directly from the driving noise
    (the observation never enters).  Its mean is one for any model.
    """
    k1, dt = grid.steps, grid.dt
    n = spec.dim_signal
    sq = np.sqrt(dt)

    x = spec.initial_law.sampler(stream_rng(seed, "signal_init"), path_count)
    rng_db = stream_rng(seed, "signal_bm")
    rng_dw = stream_rng(seed, "obs_bm")
    rng_clock = stream_rng(seed, "jump_clock")
    rng_marks = stream_rng(seed, "jump_marks")
    rng_thin = stream_rng(seed, "thinning")

    counts = rng_clock.poisson(spec.marks.core_mass * grid.horizon, path_count)
    total = int(counts.sum())
    ev_path = np.repeat(np.arange(path_count, dtype=np.int64), counts)
    ev_time = grid.horizon * (1.0 - rng_clock.random(total))
    ev_mark = np.asarray(spec.marks.core_sampler(rng_marks, total), dtype=float)
    ev_u = rng_thin.random(total)
    step = grid.step_of(ev_time) if total else np.zeros(0, dtype=np.int64)
    order = np.lexsort((ev_time, ev_path, step))
    ev_path, ev_time, ev_mark, ev_u, step = (
        a[order] for a in (ev_path, ev_time, ev_mark, ev_u, step))
    ptr = np.searchsorted(step, np.arange(k1 + 1))

    neg_log = np.zeros(path_count)
    qw = spec.marks.core_weights
    for k in range(k1):
        t = k * dt
        g = np.asarray(spec.obs_sensitivity(t, x), dtype=float)
        dw = rng_dw.standard_normal((path_count, spec.dim_obs)) * sq
        neg_log += np.einsum("pm,pm->p", g, dw) + 0.5 * dt * np.einsum("pm,pm->p", g, g)

        lam_q = spec.thinning_at_quad(t, x)
        neg_log += kernels.comp_exponent(np.ascontiguousarray(lam_q), qw, dt)

        sl = slice(ptr[k], ptr[k + 1])
        if ptr[k + 1] > ptr[k]:
            lam = np.asarray(spec.thinning(ev_time[sl], x[ev_path[sl]], ev_mark[sl]),
                             dtype=float)
            acc = ev_u[sl] < lam
            if np.any(acc):
                np.add.at(neg_log, ev_path[sl][acc], np.log(lam[acc]))

        db = rng_db.standard_normal((path_count, spec.dim_bm)) * sq
        drift = np.asarray(spec.drift(t, x), dtype=float)
        disp = np.asarray(spec.dispersion(t, x), dtype=float)
        x = kernels.euler_step(np.ascontiguousarray(x), drift, np.ascontiguousarray(disp),
                               db, dt)
    return np.exp(-neg_log)


def ks_oracle_table(spec: ModelSpec, obs: ObservationRecord,
                    fns: Sequence[Callable], node_indices: Sequence[int],
                    sample_count: int, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Plain Monte Carlo estimates of the unnormalised moments.

    Fresh signal paths are simulated under the reference dynamics and the
    likelihood along each is integrated against the fixed observation.
    Returns (means, standard errors) of shape (len(node_indices), len(fns)).
    """
    grid = obs.grid
    k1, dt = grid.steps, grid.dt
    sq = np.sqrt(dt)
    nodes = np.asarray(node_indices, dtype=int)
    if nodes.size and (nodes.min() < 0 or nodes.max() > k1):
        raise ValueError("node index outside the grid")

    rng0 = stream_rng(seed, "oracle")
    x = spec.initial_law.sampler(rng0, sample_count)
    rng_db = stream_rng(seed, "signal_bm")
    dw_ref = batch_dw_ref(spec, observation_to_batch(spec, obs))[0]
    ev_time, ev_mark, ev_step = _core_event_arrays(spec, obs)
    qw = spec.marks.core_weights

    means = np.empty((nodes.size, len(fns)))
    ses = np.empty((nodes.size, len(fns)))

    def harvest(node: int, logw: np.ndarray) -> None:
        for ci in np.flatnonzero(nodes == node):
            lik = np.exp(logw)
            for fi, fn in enumerate(fns):
                vals = np.asarray(fn(x), dtype=float).reshape(sample_count) * lik
                means[ci, fi] = vals.mean()
                ses[ci, fi] = vals.std(ddof=1) / np.sqrt(sample_count)

    logw = np.zeros(sample_count)
    harvest(0, logw)
    lo = 0
    for k in range(k1):
        t = k * dt
        g = np.asarray(spec.obs_sensitivity(t, x), dtype=float)
        logw += g @ dw_ref[k] - 0.5 * dt * np.einsum("pm,pm->p", g, g)
        lam_q = spec.thinning_at_quad(t, x)
        logw += kernels.comp_exponent(np.ascontiguousarray(lam_q), qw, dt)
        hi = lo
        while hi < ev_step.shape[0] and ev_step[hi] == k:
            hi += 1
        for e in range(lo, hi):
            lam = np.asarray(spec.thinning(float(ev_time[e]), x, float(ev_mark[e])),
                             dtype=float)
            logw += np.log(lam)
        lo = hi
        db = rng_db.standard_normal((sample_count, spec.dim_bm)) * sq
        drift = np.asarray(spec.drift(t, x), dtype=float)
        disp = np.asarray(spec.dispersion(t, x), dtype=float)
        x = kernels.euler_step(np.ascontiguousarray(x), drift,
                               np.ascontiguousarray(disp), db, dt)
        harvest(k + 1, logw)
    return means, ses


def ks_oracle(spec: ModelSpec, obs: ObservationRecord, fn: Callable, t: float,
              sample_count: int, seed: int) -> float:
    """Unnormalised moment estimate at time ``t`` (nearest grid node)."""
    node = int(round(t / obs.grid.dt))
    node = min(max(node, 0), obs.grid.steps)
    means, _ = ks_oracle_table(spec, obs, [fn], [node], sample_count, seed)
    return float(means[0, 0])
