"""Keyed, counter-based random streams built on Philox.

Every random quantity in the package is addressed by a (seed, stream, *key)
tuple, so draws are pure functions of their key: identical keys give identical
draws, distinct keys give independent streams, and nothing depends on
evaluation order or worker count.
"""
from __future__ import annotations

import numpy as np
from scipy.special import ndtri

_MASK64 = (1 << 64) - 1

# stream identifiers (first spawn-key component)
POSITIONS = 1
EDGES = 2
NOISE = 3
INIT = 4
MF_NOISE = 5
MF_INIT = 6
PROBE = 7
TRIALS = 8
RESTARTS = 9


def _key(parts):
    return tuple(int(p) & _MASK64 for p in parts)


def sequence(seed, *key) -> np.random.SeedSequence:
    return np.random.SeedSequence(entropy=int(seed) & _MASK64, spawn_key=_key(key))


def generator(seed, *key) -> np.random.Generator:
    """Philox generator addressed by ``(seed, *key)``."""
    return np.random.Generator(np.random.Philox(sequence(seed, *key)))


def uniforms(seed, *key, count: int) -> np.ndarray:
    """First ``count`` uniforms of the keyed stream.

    Entry ``i`` depends only on ``(seed, key, i)``, never on ``count``, so a
    longer read extends a shorter one (grids extensible in n).
    """
    return generator(seed, *key).random(count)


def normals_from_uniforms(u: np.ndarray) -> np.ndarray:
    """Inverse-CDF Gaussians; keeps the per-index addressing of ``uniforms``."""
    return ndtri(u)


def normal_block(seed, *key, shape) -> np.ndarray:
    """Standard-normal array for one keyed block (e.g. one time step)."""
    return generator(seed, *key).standard_normal(shape)
