"""Normalised particle filter and the reweighting bridge to the Zakai filter.

Weights stay probability vectors at every node and advance by the linearised
substeps of the Kushner-Stratonovich dynamics, each followed by a
renormalisation:

* continuous gain: w_i *= 1 + (g_i - gbar) . dW_bar with g = sigma2^-1
  obs_drift at the pre-mutation particle, gbar the weighted mean gain and
  dW_bar = dW_ref - gbar dt the innovation increment,
* compensated jump drift: w_i *= 1 - dt (c_i - cbar) with c_i the thinned
  core intensity mass at the particle and cbar its weighted mean,
* event Bayes update: w_i *= prod_j lambda(s_j, x_i, u_j) over the step's
  core events; after renormalisation this equals the sequential per-event
  atom update of the filtering equation (the per-event normalisers
  telescope into one posterior mean).

Mutation comes after the weighting, so every coefficient evaluation uses the
left-limit particle positions, matching the Zakai scheme.  The per-step
aggregates recorded along the way (mean gain, mean compensator intensity,
event factors) are exactly the ingredients :func:`reweight_ks_to_zakai`
integrates into the scalar process chi that turns the normalised run back
into an unnormalised one.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from . import kernels
from ._rng import stream_rng
from .measures import MassDegeneracy, ParticleMeasure
from .model import ModelSpec
from .pathsim import (CHANNEL_CORE, BatchObservations, ObservationRecord,
                      TimeGrid, batch_dw_ref, observation_dw_ref,
                      observation_to_batch)
from .zakai import FilterRun, _mutate, _resolve_store_nodes

__all__ = [
    "InnovationRecord",
    "ks_step",
    "run_ks",
    "reweight_ks_to_zakai",
]

_POLICIES = ("ess", "always", "never")


@dataclass(frozen=True)
class InnovationRecord:
    """Innovation increments and filter aggregates of one normalised run.

    ``dw_innov[k] = dw_ref[k] - prior_gain[k] * dt`` over (t_k, t_{k+1}];
    under the physical dynamics the cumulative sum is a Brownian motion.
    ``comp_mean[k]`` is the posterior mean of the thinned core intensity
    mass, ``event_factor[k]`` the posterior mean of the product of thinning
    values over the step's core events (1.0 when the step has none).
    """

    grid: TimeGrid
    dw_innov: np.ndarray      # (K, m)
    prior_gain: np.ndarray    # (K, m)
    comp_mean: np.ndarray     # (K,)
    event_factor: np.ndarray  # (K,)
    event_count: np.ndarray   # (K,) int

    def quadratic_variation(self) -> np.ndarray:
        """Empirical quadratic variation at the horizon, shape (m, m)."""
        return np.einsum("ki,kj->ij", self.dw_innov, self.dw_innov)


def _clamp_renorm(w: np.ndarray, k: int, t: float) -> tuple[np.ndarray, int]:
    """Zero out negative weights and renormalise each run row."""
    neg = w < 0.0
    clamped = int(np.count_nonzero(neg))
    if clamped:
        w = np.where(neg, 0.0, w)
    tot = w.sum(axis=1)
    if not np.all(np.isfinite(tot)) or np.any(tot <= 0.0):
        raise MassDegeneracy(f"normalised weights collapsed at step {k} (t={t:.6g})")
    return w / tot[:, None], clamped


def _ks_weight_update(spec: ModelSpec, x: np.ndarray, w: np.ndarray, k: int,
                      t: float, dt: float, dw_ref: np.ndarray,
                      ev_run, ev_time, ev_mark) -> dict:
    """All weight substeps of one step at fixed positions x (R, N, n).

    Returns the updated weights together with the aggregates that were
    applied; the caller mutates afterwards.
    """
    r, n_p, _ = x.shape
    g = np.asarray(spec.obs_sensitivity(t, x), dtype=float)
    gbar = np.einsum("rn,rnm->rm", w, g)
    lam_q = spec.thinning_at_quad(t, x.reshape(r * n_p, -1))
    comp = (lam_q @ spec.marks.core_weights).reshape(r, n_p)
    cbar = np.einsum("rn,rn->r", w, comp)
    dw_innov = dw_ref - gbar * dt

    w = w * (1.0 + np.einsum("rnm,rm->rn", g - gbar[:, None, :], dw_innov))
    w, c1 = _clamp_renorm(w, k, t)
    w = w * (1.0 - dt * (comp - cbar[:, None]))
    w, c2 = _clamp_renorm(w, k, t)

    if ev_run.shape[0]:
        lam = np.asarray(spec.thinning(
            ev_time[:, None], x[ev_run], ev_mark[:, None]), dtype=float)
        logprod = np.zeros((r, n_p))
        np.add.at(logprod, ev_run, np.log(lam))
        bayes = np.exp(logprod)
        event_factor = np.einsum("rn,rn->r", w, bayes)
        if not np.all(np.isfinite(event_factor)) or np.any(event_factor <= 0.0):
            raise MassDegeneracy(
                f"posterior mean of the thinning vanished at step {k} (t={t:.6g})")
        w = w * bayes
        w, c3 = _clamp_renorm(w, k, t)
    else:
        event_factor = np.ones(r)
        c3 = 0

    return {
        "weights": w, "prior_gain": gbar, "comp_mean": cbar,
        "dw_innov": dw_innov, "event_factor": event_factor,
        "clamped": c1 + c2 + c3,
    }


def ks_core(spec: ModelSpec, batch: BatchObservations, particle_count: int,
            seed: int, *, resample_policy: str = "ess",
            resample_threshold: float = 0.5,
            pi0_points: np.ndarray | None = None,
            functionals: Sequence[Callable] = (),
            checkpoint_nodes: np.ndarray | None = None,
            want_moments: bool = False,
            store_nodes: np.ndarray | None = None) -> dict:
    """Run the normalised filter on every observation of ``batch``.

    Mirrors ``zakai_core`` stream for stream, so a run with the same seed
    shares initial particles and mutation noise with the Zakai filter.
    ``functionals`` are evaluated against the normalised measure at
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
    if pi0_points is None:
        x = spec.initial_law.sampler(stream_rng(seed, "init_particles"), r * n_p)
        x = x.reshape(r, n_p, n)
    else:
        x = np.array(pi0_points, dtype=float).reshape(r, n_p, n)
    w = np.full((r, n_p), 1.0 / n_p)

    dw_ref = batch_dw_ref(spec, batch)
    checkpoint_nodes = (np.zeros(0, dtype=int) if checkpoint_nodes is None
                        else np.asarray(checkpoint_nodes, dtype=int))
    func_vals = np.empty((r, checkpoint_nodes.size, len(functionals)))
    states: list[tuple[np.ndarray, np.ndarray]] = []
    store_nodes = np.zeros(0, dtype=int) if store_nodes is None else store_nodes

    ess = np.empty((r, k1 + 1))
    mean = np.empty((r, k1 + 1, n)) if want_moments else None
    var = np.empty((r, k1 + 1, n)) if want_moments else None
    prior_gain = np.empty((r, k1, spec.dim_obs))
    dw_innov = np.empty((r, k1, spec.dim_obs))
    comp_mean = np.empty((r, k1))
    event_factor = np.empty((r, k1))
    event_count = np.zeros((r, k1), dtype=np.int64)
    clamp_count = 0
    resample_count = 0

    def record(node: int) -> None:
        ess[:, node] = kernels.ess_runs(w)
        if want_moments:
            mn, vr = kernels.weighted_moments(x, w)
            mean[:, node], var[:, node] = mn, vr
        for ci in np.flatnonzero(checkpoint_nodes == node):
            for fi, fn in enumerate(functionals):
                vals = np.asarray(fn(x), dtype=float).reshape(r, n_p)
                func_vals[:, ci, fi] = np.einsum("rn,rn->r", vals, w)
        if node in store_nodes:
            states.append((x.copy(), w.copy()))

    record(0)
    for k in range(k1):
        t = k * dt
        ev = slice(batch.ev_ptr[k], batch.ev_ptr[k + 1])
        ev_run = batch.ev_run[ev]
        upd = _ks_weight_update(spec, x, w, k, t, dt, dw_ref[:, k, :],
                                ev_run, batch.ev_time[ev], batch.ev_mark[ev])
        w = upd["weights"]
        prior_gain[:, k] = upd["prior_gain"]
        dw_innov[:, k] = upd["dw_innov"]
        comp_mean[:, k] = upd["comp_mean"]
        event_factor[:, k] = upd["event_factor"]
        clamp_count += upd["clamped"]
        if ev_run.shape[0]:
            np.add.at(event_count[:, k], ev_run, 1)

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
        "ess": ess, "mean": mean, "var": var,
        "func_vals": func_vals, "checkpoint_nodes": checkpoint_nodes,
        "states": states, "store_nodes": store_nodes,
        "prior_gain": prior_gain, "dw_innov": dw_innov,
        "comp_mean": comp_mean, "event_factor": event_factor,
        "event_count": event_count,
        "clamp_count": clamp_count, "resample_count": resample_count,
    }


def run_ks(spec: ModelSpec, obs: ObservationRecord, particle_count: int,
           seed: int, *, pi0: ParticleMeasure | None = None,
           resample_policy: str = "ess", resample_threshold: float = 0.5,
           store: str | Sequence[int] = "auto") -> FilterRun:
    """Normalised filter along one observation record.

    All stored states are probability measures; the innovation record needed
    by :func:`reweight_ks_to_zakai` rides along in ``aggregates``.
    """
    if particle_count < 1:
        raise ValueError("particle_count must be positive")
    if pi0 is not None:
        if pi0.size != particle_count:
            raise ValueError(f"pi0 has {pi0.size} particles, expected {particle_count}")
        if not pi0.normalized:
            raise ValueError("pi0 must be normalised")
    batch = observation_to_batch(spec, obs)
    store_nodes = _resolve_store_nodes(store, obs.grid.steps)
    out = ks_core(
        spec, batch, particle_count, seed,
        resample_policy=resample_policy, resample_threshold=resample_threshold,
        pi0_points=None if pi0 is None else pi0.points[None, :, :],
        want_moments=True, store_nodes=store_nodes)
    states = [ParticleMeasure(x[0], w[0], normalized=True)
              for x, w in out["states"]]
    innovations = InnovationRecord(
        grid=obs.grid, dw_innov=out["dw_innov"][0], prior_gain=out["prior_gain"][0],
        comp_mean=out["comp_mean"][0], event_factor=out["event_factor"][0],
        event_count=out["event_count"][0])
    return FilterRun(
        kind="ks", grid=obs.grid, particle_count=particle_count, seed=seed,
        node_indices=store_nodes, states=states,
        mass=np.ones(obs.grid.steps + 1), ess=out["ess"][0],
        mean=out["mean"][0], var=out["var"][0],
        aggregates={"innovations": innovations},
        diagnostics={"resample_count": out["resample_count"],
                     "resample_policy": resample_policy,
                     "clamp_count": out["clamp_count"]},
    )


def ks_step(spec: ModelSpec, state: ParticleMeasure, t: float, dt: float,
            dy_cont: np.ndarray, events,
            mutation_rng: np.random.Generator) -> tuple[ParticleMeasure, dict]:
    """One normalised filter step; the counterpart of ``zakai_step``.

    ``state`` must be normalised.  Weighting uses the pre-mutation positions,
    mutation follows, resampling stays a separate concern.
    """
    if not state.normalized:
        raise ValueError("ks_step requires a normalised state")
    if isinstance(events, tuple):
        ev_time, ev_mark = (np.asarray(a, dtype=float).reshape(-1) for a in events)
    else:
        core = events.select((events.channel == CHANNEL_CORE) & events.accepted)
        ev_time, ev_mark = core.time, core.mark
    drift = spec.small_jump_mean_drift(t)
    dw_ref = spec.obs_disp_inv(t) @ (np.asarray(dy_cont, dtype=float) + drift * dt)
    x = state.points[None, :, :]
    w = state.weights[None, :]
    ev_run = np.zeros(ev_time.shape[0], dtype=np.int64)
    k = int(round(t / dt))
    upd = _ks_weight_update(spec, x, w, k, t, dt, dw_ref[None, :],
                            ev_run, ev_time, ev_mark)
    x_new = _mutate(spec, x, t, dt, mutation_rng)[0]
    new_state = ParticleMeasure(x_new, upd["weights"][0], normalized=True)
    info = {
        "dw_innov": upd["dw_innov"][0],
        "prior_gain": upd["prior_gain"][0],
        "comp_mean": float(upd["comp_mean"][0]),
        "event_factor": float(upd["event_factor"][0]),
        "clamped": upd["clamped"],
        "events": int(ev_time.shape[0]),
    }
    return new_state, info


def reweight_ks_to_zakai(spec: ModelSpec, ks_run: FilterRun,
                         obs: ObservationRecord) -> FilterRun:
    """Scale a normalised run into an unnormalised one.

    The scaling process chi integrates the run's own aggregates with the
    same left-limit rules the Zakai filter uses for its likelihood factors:
    per step, exp(gbar . dW_ref - |gbar|^2 dt / 2) times the compensator
    factor exp(dt (nu0 - comp_mean)) times the recorded event factor.  The
    output's mass path is chi; normalising it back recovers ``ks_run``
    exactly because chi is a per-node scalar.
    """
    if ks_run.kind != "ks":
        raise ValueError(f"expected a normalised run, got kind={ks_run.kind!r}")
    innov = ks_run.aggregates.get("innovations")
    if innov is None:
        raise ValueError("run carries no innovation record")
    grid = ks_run.grid
    if obs.grid.steps != grid.steps or abs(obs.grid.horizon - grid.horizon) > 1e-12:
        raise ValueError("observation grid does not match the run")
    k1, dt = grid.steps, grid.dt

    dw_ref = observation_dw_ref(spec, obs)
    if not np.allclose(innov.dw_innov, dw_ref - innov.prior_gain * dt,
                       rtol=0.0, atol=1e-10):
        raise ValueError("observation record does not match the run's innovations")

    gain = innov.prior_gain
    qw_total = float(spec.marks.core_weights.sum())
    log_inc = (np.einsum("km,km->k", gain, dw_ref)
               - 0.5 * dt * np.einsum("km,km->k", gain, gain)
               + dt * (qw_total - innov.comp_mean)
               + np.log(innov.event_factor))
    chi = np.empty(k1 + 1)
    chi[0] = 1.0
    chi[1:] = np.exp(np.cumsum(log_inc))

    states = []
    for node, s in zip(ks_run.node_indices, ks_run.states):
        scale = float(chi[int(node)])
        normed = bool(abs(scale * s.weights.sum() - 1.0) <= 1e-12)
        states.append(ParticleMeasure(s.points, s.weights * scale,
                                      normalized=normed))
    return FilterRun(
        kind="reweighted", grid=grid, particle_count=ks_run.particle_count,
        seed=ks_run.seed, node_indices=ks_run.node_indices, states=states,
        mass=chi, ess=ks_run.ess, mean=ks_run.mean, var=ks_run.var,
        aggregates={"innovations": innov, "log_chi_increments": log_inc},
        diagnostics=dict(ks_run.diagnostics),
    )
