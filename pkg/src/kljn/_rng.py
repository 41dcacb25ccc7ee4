"""Seeded random streams.

All randomness flows through :func:`make_rng`, which builds a
``numpy.random.Generator`` on top of the Philox-4x64 counter-based bit
generator keyed by a ``numpy.random.SeedSequence``.  Child streams are
derived with :func:`derive_rng` from a master seed and a tuple of integer
path components (``spawn_key``), so a stream depends only on
``(master_seed, path)`` and never on the order in which streams are created.

Stream paths used by the package:

* ``(0, i)``   -- episode ``i`` of an advantage estimate
* ``(1,)``     -- distinguisher calibration
* ``(2, k)``   -- bit period ``k`` of a key-exchange session
* ``(4, id, k)`` -- dataset ``k`` of a figure
"""

from __future__ import annotations

import numpy as np

SeedLike = int | np.random.SeedSequence | np.random.Generator | None

EPISODE = 0
CALIBRATION = 1
PERIOD = 2


def make_rng(seed: SeedLike = None) -> np.random.Generator:
    """Return a Philox-backed generator.

    A ``Generator`` is passed through unchanged so callers can thread one
    stream through several draws.
    """
    if isinstance(seed, np.random.Generator):
        return seed
    if not isinstance(seed, np.random.SeedSequence):
        if seed is not None and (int(seed) < 0 or int(seed) >= 2**64):
            raise ValueError(f"seed must be an unsigned 64-bit integer, got {seed}")
        seed = np.random.SeedSequence(seed)
    return np.random.Generator(np.random.Philox(seed))


def derive_seed(master_seed: int, *path: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(int(master_seed), spawn_key=tuple(int(p) for p in path))


def derive_rng(master_seed: int, *path: int) -> np.random.Generator:
    return make_rng(derive_seed(master_seed, *path))
