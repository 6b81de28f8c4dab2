"""Seeding helpers. All randomness goes through numpy Generators."""
from __future__ import annotations

import numpy as np


def as_generator(seed_or_rng) -> np.random.Generator:
    if isinstance(seed_or_rng, np.random.Generator):
        return seed_or_rng
    return np.random.default_rng(seed_or_rng)


def chain_seeds(master_seed: int, n_chains: int) -> list[np.random.SeedSequence]:
    """Per-chain seed sequences: child ``k`` of ``SeedSequence(master_seed)``.

    Spawning is counter based, so chain ``k`` gets the same stream whatever
    the number of chains or workers.
    """
    return np.random.SeedSequence(master_seed).spawn(n_chains)


def split_streams(seed_or_rng, n: int = 2) -> list[np.random.Generator]:
    """Independent child generators, e.g. one for noise, one for subsampling."""
    if isinstance(seed_or_rng, np.random.Generator):
        return list(seed_or_rng.spawn(n))
    ss = seed_or_rng if isinstance(seed_or_rng, np.random.SeedSequence) else np.random.SeedSequence(seed_or_rng)
    return [np.random.default_rng(s) for s in ss.spawn(n)]
