"""Counter-style random streams.

Every stochastic routine in the package receives either a seed (int or a
tuple of ints) or an already-constructed ``numpy.random.Generator``.  Seeds
are expanded into independent Philox streams keyed on the full path
``(master, *indices)``, so results do not depend on execution order and
repeated runs are bit-identical.
"""

from __future__ import annotations

import numpy as np

Seed = int | tuple[int, ...]


def seed_path(seed: Seed) -> tuple[int, ...]:
    if isinstance(seed, (int, np.integer)):
        return (int(seed),)
    return tuple(int(s) for s in seed)


def stream(seed: Seed, *path: int) -> np.random.Generator:
    """Return the generator for the sub-stream ``(seed, *path)``."""
    full = seed_path(seed) + tuple(int(p) for p in path)
    ss = np.random.SeedSequence(entropy=full[0], spawn_key=full[1:])
    return np.random.Generator(np.random.Philox(ss))


def as_generator(rng: Seed | np.random.Generator) -> np.random.Generator:
    if isinstance(rng, np.random.Generator):
        return rng
    return stream(rng)
