"""Counter-based random streams keyed by ``(master seed, stream id...)``.

Every stream is an independent Philox generator whose key is derived from the
master seed and an integer path, so results depend only on the seed, the
stream id and the draw index. No generator state is shared between streams.
"""

from __future__ import annotations

import numpy as np

# Stream purposes; used as the first component of a stream id.
EMPIRICAL = 0
ORACLE = 1
AUX = 2


def stream(seed: int, *ids: int) -> np.random.Generator:
    """Return the generator for stream ``ids`` under master ``seed``."""
    if seed < 0:
        raise ValueError(f"seed must be nonnegative, got {seed}")
    key = tuple(int(i) for i in ids)
    if any(i < 0 for i in key):
        raise ValueError(f"stream ids must be nonnegative, got {key}")
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=key)
    return np.random.Generator(np.random.Philox(ss))


def substream(rng: np.random.Generator, *ids: int) -> np.random.Generator:
    """Derive a child stream from an existing one without consuming draws.

    The child is keyed by the parent's seed sequence extended with ``ids``,
    so it is reproducible and independent of how much of the parent has been
    consumed.
    """
    ss = rng.bit_generator.seed_seq
    key = tuple(ss.spawn_key) + tuple(int(i) for i in ids)
    child = np.random.SeedSequence(entropy=ss.entropy, spawn_key=key)
    return np.random.Generator(np.random.Philox(child))


def uniform_open(rng: np.random.Generator, n: int) -> np.ndarray:
    """Uniform draws on the half-open interval (0, 1]."""
    return 1.0 - rng.random(n)
