"""Counter-based random streams, one per replica, derived from a master seed."""

from __future__ import annotations

import numpy as np

__all__ = ["make_generator", "spawn_seeds", "replica_generators"]


def make_generator(seed) -> np.random.Generator:
    """Philox generator from an int or a ``SeedSequence``."""
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    return np.random.Generator(np.random.Philox(ss))


def spawn_seeds(master, n: int) -> list[np.random.SeedSequence]:
    """``n`` independent child seed sequences of ``master``."""
    ss = master if isinstance(master, np.random.SeedSequence) else np.random.SeedSequence(master)
    return ss.spawn(n)


def replica_generators(master, n: int) -> list[np.random.Generator]:
    return [make_generator(s) for s in spawn_seeds(master, n)]
