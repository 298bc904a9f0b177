"""Named random streams derived from a single master seed.

Every stochastic component (signal Brownian motion, observation noise, jump
clock, marks, thinning uniforms, particle initialisation, mutation, resampling)
draws from its own generator so that experiments can share some noise sources
while varying others.  The derivation is a pure function of
(master seed, stream name, index), so results are reproducible bit for bit.
"""

from __future__ import annotations

import numpy as np

# Stable stream ids; never reorder or reuse numbers.
STREAM_IDS = {
    "signal_bm": 1,
    "obs_bm": 2,
    "jump_clock": 3,
    "jump_marks": 4,
    "thinning": 5,
    "init_particles": 6,
    "mutation": 7,
    "resample": 8,
    "probe": 9,
    "oracle": 10,
    "chunk": 11,
    "signal_init": 12,
}


def stream_seed(seed: int, stream: str, index: int = 0) -> np.random.SeedSequence:
    if stream not in STREAM_IDS:
        raise KeyError(f"unknown random stream {stream!r}")
    return np.random.SeedSequence(entropy=int(seed), spawn_key=(STREAM_IDS[stream], int(index)))


def stream_rng(seed: int, stream: str, index: int = 0) -> np.random.Generator:
    """Generator for a named noise stream of a run keyed by ``seed``."""
    return np.random.default_rng(stream_seed(seed, stream, index))


def chunk_seeds(seed: int, count: int) -> list[int]:
    """Independent sub-seeds for embarrassingly parallel chunks of one job."""
    root = np.random.SeedSequence(entropy=int(seed), spawn_key=(STREAM_IDS["chunk"],))
    return [int(s.generate_state(1, np.uint64)[0]) for s in root.spawn(count)]
