"""Path simulation for the coupled signal-observation system.

Two simulators share all noise streams:

``simulate_system``
    The physical dynamics: the observation drift depends on the signal, and
    jump candidates on both mark regions are accepted with the thinning
    probability evaluated at the candidate time and the latest signal node.
    Core-region jumps are compensated (their thinned mean rate is subtracted
    from the continuous increment), tail jumps are not.

``simulate_decoupled``
    The reference dynamics used by the filters' sampling representation: the
    observation Brownian part is a plain Brownian motion, core-region
    candidates are all accepted (unit acceptance), and the core compensator
    uses the unthinned mark measure.  The signal path coincides bit for bit
    with ``simulate_system`` at the same seed.

Jump times are exact (not rounded to the grid); each event stores the step
``k`` with ``t_k < s <= t_{k+1}`` whose node value feeds the thinning.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, replace

import numpy as np

from ._rng import stream_rng
from .model import ModelSpec

__all__ = [
    "TimeGrid",
    "JumpEvents",
    "NoiseRecord",
    "SystemPath",
    "ObservationRecord",
    "simulate_system",
    "simulate_decoupled",
    "simulate_signal",
    "extract_observation_events",
    "save_path",
    "load_path",
]

CHANNEL_CORE = 0
CHANNEL_TAIL = 1


@dataclass(frozen=True)
class TimeGrid:
    horizon: float
    steps: int

    def __post_init__(self):
        if not (self.horizon > 0.0 and np.isfinite(self.horizon)):
            raise ValueError(f"horizon must be positive, got {self.horizon!r}")
        if self.steps < 1:
            raise ValueError(f"steps must be >= 1, got {self.steps!r}")

    @property
    def dt(self) -> float:
        return self.horizon / self.steps

    @property
    def nodes(self) -> np.ndarray:
        return np.linspace(0.0, self.horizon, self.steps + 1)

    def step_of(self, times: np.ndarray) -> np.ndarray:
        """Step index k with t_k < s <= t_{k+1}, clipped to the grid."""
        k = np.ceil(np.asarray(times) / self.dt).astype(np.int64) - 1
        return np.clip(k, 0, self.steps - 1)


@dataclass(frozen=True)
class JumpEvents:
    """Candidate jump events in time order (empty arrays when none)."""

    time: np.ndarray      # (E,)
    mark: np.ndarray      # (E,)
    channel: np.ndarray   # (E,) 0 core / 1 tail
    accepted: np.ndarray  # (E,) bool
    step: np.ndarray      # (E,) int64
    size: np.ndarray      # (E, m) observation jump size (zero when rejected)

    @classmethod
    def empty(cls, dim_obs: int) -> "JumpEvents":
        z = np.zeros(0)
        return cls(z, z.copy(), np.zeros(0, dtype=np.int64), np.zeros(0, dtype=bool),
                   np.zeros(0, dtype=np.int64), np.zeros((0, dim_obs)))

    @property
    def count(self) -> int:
        return self.time.shape[0]

    def select(self, mask: np.ndarray) -> "JumpEvents":
        return JumpEvents(self.time[mask], self.mark[mask], self.channel[mask],
                          self.accepted[mask], self.step[mask], self.size[mask])


@dataclass(frozen=True)
class NoiseRecord:
    db: np.ndarray | None     # (K, d) signal Brownian increments
    dw: np.ndarray | None     # (K, m) observation Brownian increments
    events: JumpEvents
    measure_tag: str          # "physical" or "reference"
    seed: int


@dataclass(frozen=True)
class SystemPath:
    grid: TimeGrid
    x: np.ndarray        # (K+1, n)
    y: np.ndarray        # (K+1, m)
    dy_cont: np.ndarray  # (K, m) continuous observation increments
    noise: NoiseRecord
    measure_tag: str
    seed: int


@dataclass(frozen=True)
class ObservationRecord:
    """What a filter is allowed to see: the observation decomposed into
    de-jumped continuous increments and the jump events."""

    grid: TimeGrid
    y0: np.ndarray       # (m,)
    dy_cont: np.ndarray  # (K, m)
    events: JumpEvents
    measure_tag: str
    seed: int

    def core_events(self) -> JumpEvents:
        return self.events.select(
            (self.events.channel == CHANNEL_CORE) & self.events.accepted)

    def reconstruct_y(self) -> np.ndarray:
        """Re-sum components to observation nodes; inverse of extraction."""
        k1, m = self.dy_cont.shape
        y = np.empty((k1 + 1, m))
        y[0] = self.y0
        jump_sum = np.zeros((k1, m))
        acc = self.events.accepted
        np.add.at(jump_sum, self.events.step[acc], self.events.size[acc])
        for k in range(k1):
            y[k + 1] = y[k] + (self.dy_cont[k] + jump_sum[k])
        return y


def observation_dw_ref(spec: ModelSpec, obs: ObservationRecord) -> np.ndarray:
    """Reference Brownian increments read off the observation.

    Adds back the deterministic unthinned core compensator before applying
    sigma2^-1, so that reference-measure observations reproduce their driving
    Brownian increments exactly.  (The shipped scenarios use core jump sizes
    with zero mark-measure mean, for which the correction vanishes.)
    """
    k1 = obs.grid.steps
    dt = obs.grid.dt
    out = np.empty_like(obs.dy_cont)
    for k in range(k1):
        t = k * dt
        drift = spec.small_jump_mean_drift(t)
        out[k] = spec.obs_disp_inv(t) @ (obs.dy_cont[k] + drift * dt)
    return out


# ---------------------------------------------------------------------------
# candidate generation


def _draw_candidates(spec: ModelSpec, grid: TimeGrid, rng_clock, rng_marks) -> JumpEvents:
    """Candidate events for both mark regions, time-sorted, not yet thinned."""
    t_end = grid.horizon
    n_core = rng_clock.poisson(spec.marks.core_mass * t_end)
    t_core = t_end * (1.0 - rng_clock.random(n_core))  # in (0, T]
    n_tail = 0
    t_tail = np.zeros(0)
    if spec.marks.tail_mass > 0.0 and spec.marks.tail_sampler is not None:
        n_tail = rng_clock.poisson(spec.marks.tail_mass * t_end)
        t_tail = t_end * (1.0 - rng_clock.random(n_tail))
    u_core = np.asarray(spec.marks.core_sampler(rng_marks, n_core), dtype=float)
    u_tail = (np.asarray(spec.marks.tail_sampler(rng_marks, n_tail), dtype=float)
              if n_tail else np.zeros(0))

    time = np.concatenate([t_core, t_tail])
    mark = np.concatenate([u_core, u_tail])
    channel = np.concatenate([
        np.zeros(n_core, dtype=np.int64), np.ones(int(n_tail), dtype=np.int64)])
    order = np.argsort(time, kind="stable")
    time, mark, channel = time[order], mark[order], channel[order]
    return JumpEvents(
        time=time, mark=mark, channel=channel,
        accepted=np.zeros(time.shape[0], dtype=bool),
        step=grid.step_of(time) if time.size else np.zeros(0, dtype=np.int64),
        size=np.zeros((time.shape[0], spec.dim_obs)),
    )


def _event_sizes(spec: ModelSpec, time, mark, channel) -> np.ndarray:
    size = np.zeros((time.shape[0], spec.dim_obs))
    core = channel == CHANNEL_CORE
    if np.any(core):
        size[core] = np.asarray(spec.jump_small(time[core], mark[core]), dtype=float)
    if np.any(~core):
        size[~core] = np.asarray(spec.jump_large(time[~core], mark[~core]), dtype=float)
    return size


# ---------------------------------------------------------------------------
# simulators


def _simulate(spec: ModelSpec, grid: TimeGrid, seed: int, reference: bool) -> SystemPath:
    k1, dt = grid.steps, grid.dt
    n, m, d = spec.dim_signal, spec.dim_obs, spec.dim_bm
    sq = np.sqrt(dt)

    x0 = spec.initial_law.sampler(stream_rng(seed, "signal_init"), 1)[0]
    db = stream_rng(seed, "signal_bm").standard_normal((k1, d)) * sq
    dw = stream_rng(seed, "obs_bm").standard_normal((k1, m)) * sq
    cand = _draw_candidates(spec, grid, stream_rng(seed, "jump_clock"),
                            stream_rng(seed, "jump_marks"))
    thin_u = stream_rng(seed, "thinning").random(cand.count)

    x = np.empty((k1 + 1, n))
    y = np.empty((k1 + 1, m))
    dy_cont = np.empty((k1, m))
    x[0] = x0
    y[0] = 0.0
    accepted = np.zeros(cand.count, dtype=bool)

    # Events are time sorted, so a moving window walks each step's slice.
    ev_lo = 0
    for k in range(k1):
        t = k * dt
        xk = x[k][None, :]
        s2 = np.asarray(spec.obs_dispersion(t), dtype=float)

        ev_hi = ev_lo
        while ev_hi < cand.count and cand.step[ev_hi] == k:
            ev_hi += 1
        jump_sum = np.zeros(m)
        if ev_hi > ev_lo:
            sl = slice(ev_lo, ev_hi)
            lam = np.asarray(
                spec.thinning(cand.time[sl], np.broadcast_to(x[k], (ev_hi - ev_lo, n)),
                              cand.mark[sl]), dtype=float)
            take = thin_u[sl] < lam
            if reference:
                take = take | (cand.channel[sl] == CHANNEL_CORE)
            accepted[sl] = take
            if np.any(take):
                idx = np.flatnonzero(take) + ev_lo
                sizes = _event_sizes(spec, cand.time[idx], cand.mark[idx], cand.channel[idx])
                # sequential accumulation in event order; reconstruction adds
                # the stored sizes back in the same order, bit for bit
                for r in range(sizes.shape[0]):
                    jump_sum += sizes[r]
        ev_lo = ev_hi

        if reference:
            comp = spec.small_jump_mean_drift(t)
            dy_cont[k] = dw[k] @ s2.T - comp * dt
        else:
            lam_q = spec.thinning_at_quad(t, xk)[0]
            comp = (spec.marks.core_weights * lam_q) @ spec.small_jump_quad(t)
            dy_cont[k] = spec.obs_drift(t, xk)[0] * dt + dw[k] @ s2.T - comp * dt
        y[k + 1] = y[k] + (dy_cont[k] + jump_sum)

        bx = spec.drift(t, xk)[0]
        ax = spec.dispersion(t, xk)[0]
        x[k + 1] = x[k] + bx * dt + ax @ db[k]

    size = np.zeros((cand.count, m))
    if cand.count:
        size[accepted] = _event_sizes(
            spec, cand.time[accepted], cand.mark[accepted], cand.channel[accepted])
    events = replace(cand, accepted=accepted, size=size)
    tag = "reference" if reference else "physical"
    noise = NoiseRecord(db=db, dw=dw, events=events, measure_tag=tag, seed=seed)
    return SystemPath(grid=grid, x=x, y=y, dy_cont=dy_cont, noise=noise,
                      measure_tag=tag, seed=seed)


def simulate_system(spec: ModelSpec, grid: TimeGrid, seed: int) -> SystemPath:
    """Joint path under the physical dynamics."""
    return _simulate(spec, grid, seed, reference=False)


def simulate_decoupled(spec: ModelSpec, grid: TimeGrid, seed: int) -> SystemPath:
    """Joint path under the reference dynamics (observation decoupled from
    the signal on the Brownian and core-jump channels)."""
    return _simulate(spec, grid, seed, reference=True)


def simulate_signal(spec: ModelSpec, grid: TimeGrid, x0: np.ndarray,
                    db: np.ndarray) -> np.ndarray:
    """Euler path of the signal alone from prescribed Brownian increments.

    x0 (n,), db (K, d) -> nodes (K+1, n).  Used for grid-refinement studies
    where increments are aggregated across grids.
    """
    k1, dt = grid.steps, grid.dt
    x = np.empty((k1 + 1, spec.dim_signal))
    x[0] = np.asarray(x0, dtype=float)
    for k in range(k1):
        t = k * dt
        xk = x[k][None, :]
        x[k + 1] = x[k] + spec.drift(t, xk)[0] * dt + spec.dispersion(t, xk)[0] @ db[k]
    return x


def extract_observation_events(path: SystemPath) -> ObservationRecord:
    """Split a path's observation into continuous increments and jumps.

    The components re-sum to the stored observation nodes bit for bit, since
    the simulator accumulated them in the same order.
    """
    return ObservationRecord(
        grid=path.grid, y0=path.y[0].copy(), dy_cont=path.dy_cont.copy(),
        events=path.noise.events, measure_tag=path.measure_tag, seed=path.seed)


# ---------------------------------------------------------------------------
# batched reference observations (verification workloads)


@dataclass(frozen=True)
class BatchObservations:
    """Observation inputs for many independent filter runs.

    Only what filters consume is generated: continuous increments and core
    jump events.  Under the reference dynamics these are independent of the
    signal, so no signal paths are needed.  Events are sorted by (step, run)
    with CSR pointers per step.
    """

    grid: TimeGrid
    dy_cont: np.ndarray  # (R, K, m)
    ev_ptr: np.ndarray   # (K+1,)
    ev_run: np.ndarray   # (E,)
    ev_time: np.ndarray  # (E,)
    ev_mark: np.ndarray  # (E,)
    seed: int

    @property
    def count(self) -> int:
        return self.dy_cont.shape[0]


def batch_dw_ref(spec: ModelSpec, batch: "BatchObservations") -> np.ndarray:
    """Reference Brownian increments for every run, shape (R, K, m)."""
    k1, dt = batch.grid.steps, batch.grid.dt
    out = np.empty_like(batch.dy_cont)
    for k in range(k1):
        t = k * dt
        drift = spec.small_jump_mean_drift(t)
        out[:, k, :] = (batch.dy_cont[:, k, :] + drift * dt) @ spec.obs_disp_inv(t).T
    return out


def reference_observation_batch(spec: ModelSpec, grid: TimeGrid, count: int,
                                seed: int) -> BatchObservations:
    k1, dt = grid.steps, grid.dt
    m = spec.dim_obs
    sq = np.sqrt(dt)

    dw = stream_rng(seed, "obs_bm").standard_normal((count, k1, m)) * sq
    dy = np.empty_like(dw)
    for k in range(k1):
        t = k * dt
        s2 = np.asarray(spec.obs_dispersion(t), dtype=float)
        dy[:, k, :] = dw[:, k, :] @ s2.T - spec.small_jump_mean_drift(t) * dt

    rng_clock = stream_rng(seed, "jump_clock")
    rng_marks = stream_rng(seed, "jump_marks")
    counts = rng_clock.poisson(spec.marks.core_mass * grid.horizon, count)
    total = int(counts.sum())
    ev_run = np.repeat(np.arange(count, dtype=np.int64), counts)
    ev_time = grid.horizon * (1.0 - rng_clock.random(total))
    ev_mark = np.asarray(spec.marks.core_sampler(rng_marks, total), dtype=float)
    step = grid.step_of(ev_time) if total else np.zeros(0, dtype=np.int64)
    order = np.lexsort((ev_time, ev_run, step))
    ev_run, ev_time, ev_mark, step = ev_run[order], ev_time[order], ev_mark[order], step[order]
    ptr = np.searchsorted(step, np.arange(k1 + 1))
    return BatchObservations(grid=grid, dy_cont=dy, ev_ptr=ptr, ev_run=ev_run,
                             ev_time=ev_time, ev_mark=ev_mark, seed=seed)


def observation_to_batch(spec: ModelSpec, obs: ObservationRecord) -> BatchObservations:
    """View a single observation record as a batch of one run."""
    core = obs.core_events()
    order = np.argsort(core.step, kind="stable")
    step = core.step[order]
    ptr = np.searchsorted(step, np.arange(obs.grid.steps + 1))
    return BatchObservations(
        grid=obs.grid, dy_cont=obs.dy_cont[None, :, :], ev_ptr=ptr,
        ev_run=np.zeros(step.shape[0], dtype=np.int64),
        ev_time=core.time[order], ev_mark=core.mark[order], seed=obs.seed)


# ---------------------------------------------------------------------------
# serialization


def save_path(path: SystemPath, out_dir, config_hash: str | None = None) -> None:
    """Write ``path.csv`` (nodes) and ``path.meta.json`` (everything else)."""
    os.makedirs(out_dir, exist_ok=True)
    n, m = path.x.shape[1], path.y.shape[1]
    cols = ["t"] + [f"x{i}" for i in range(n)] + [f"y{i}" for i in range(m)]
    header = {"measure_tag": path.measure_tag, "seed": path.seed}
    if config_hash is not None:
        header["config_hash"] = config_hash
    with open(os.path.join(out_dir, "path.csv"), "w") as fh:
        fh.write("# " + json.dumps(header, sort_keys=True) + "\n")
        fh.write(",".join(cols) + "\n")
        nodes = path.grid.nodes
        for k in range(path.grid.steps + 1):
            row = np.concatenate([[nodes[k]], path.x[k], path.y[k]])
            fh.write(",".join(f"{v:.17g}" for v in row) + "\n")

    ev = path.noise.events
    meta = {
        "grid": {"horizon": path.grid.horizon, "steps": path.grid.steps},
        "measure_tag": path.measure_tag,
        "seed": path.seed,
        "config_hash": config_hash,
        "dims": {"signal": n, "obs": m,
                 "bm": 0 if path.noise.db is None else path.noise.db.shape[1]},
        "dy_cont": path.dy_cont.tolist(),
        "noise": {
            "db": None if path.noise.db is None else path.noise.db.tolist(),
            "dw": None if path.noise.dw is None else path.noise.dw.tolist(),
        },
        "events": {
            "time": ev.time.tolist(), "mark": ev.mark.tolist(),
            "channel": ev.channel.tolist(), "accepted": ev.accepted.tolist(),
            "step": ev.step.tolist(), "size": ev.size.tolist(),
        },
    }
    with open(os.path.join(out_dir, "path.meta.json"), "w") as fh:
        json.dump(meta, fh, sort_keys=True, indent=1)
        fh.write("\n")


def load_path(out_dir) -> SystemPath:
    with open(os.path.join(out_dir, "path.meta.json")) as fh:
        meta = json.load(fh)
    grid = TimeGrid(meta["grid"]["horizon"], meta["grid"]["steps"])
    n, m = meta["dims"]["signal"], meta["dims"]["obs"]
    with open(os.path.join(out_dir, "path.csv")) as fh:
        fh.readline()
        fh.readline()
        data = np.loadtxt(fh, delimiter=",", ndmin=2)
    x = data[:, 1:1 + n]
    y = data[:, 1 + n:1 + n + m]
    ev = meta["events"]
    events = JumpEvents(
        time=np.asarray(ev["time"], dtype=float),
        mark=np.asarray(ev["mark"], dtype=float),
        channel=np.asarray(ev["channel"], dtype=np.int64),
        accepted=np.asarray(ev["accepted"], dtype=bool),
        step=np.asarray(ev["step"], dtype=np.int64),
        size=np.asarray(ev["size"], dtype=float).reshape(len(ev["time"]), m),
    )
    db = meta["noise"]["db"]
    dw = meta["noise"]["dw"]
    noise = NoiseRecord(
        db=None if db is None else np.asarray(db, dtype=float),
        dw=None if dw is None else np.asarray(dw, dtype=float),
        events=events, measure_tag=meta["measure_tag"], seed=meta["seed"])
    return SystemPath(grid=grid, x=np.ascontiguousarray(x), y=np.ascontiguousarray(y),
                      dy_cont=np.asarray(meta["dy_cont"], dtype=float).reshape(grid.steps, m),
                      noise=noise, measure_tag=meta["measure_tag"], seed=meta["seed"])
