"""Deterministic, splittable random streams.

Every stochastic call in the package takes an explicit ``numpy.random.Generator``.
Streams are Philox (counter-based) generators keyed by a master seed plus a path
of integers, so an episode's randomness depends only on ``(seed, purpose, ...)``
and never on execution order or worker count.
"""

from __future__ import annotations

import numpy as np

# purpose tags
INIT = 0
TRAIN = 1
EVAL = 2
AUTH = 3

# per-episode sub-streams
ENV = 0
AGENT = 1


def stream(seed: int, *path: int) -> np.random.Generator:
    seq = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(p) for p in path))
    return np.random.Generator(np.random.Philox(seq))


def episode_streams(seed: int, purpose: int, *path: int) -> tuple[np.random.Generator, np.random.Generator]:
    """Return ``(env_rng, agent_rng)`` for one episode."""
    return stream(seed, purpose, *path, ENV), stream(seed, purpose, *path, AGENT)
