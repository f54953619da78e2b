"""Small shared helpers: dB conversions and reproducible RNG streams."""
from __future__ import annotations

import numpy as np


def db_to_linear(db: float) -> float:
    """Power ratio from dB."""
    return 10.0 ** (db / 10.0)


def linear_to_db(x: float) -> float:
    """dB from a linear power ratio."""
    return 10.0 * np.log10(x)


def dbm_to_mw(dbm: float) -> float:
    return 10.0 ** (dbm / 10.0)


def mw_to_dbm(mw: float) -> float:
    return 10.0 * np.log10(mw)


def as_rng(seed_or_rng) -> np.random.Generator:
    """Accept either a seed (int / SeedSequence) or a ready Generator."""
    if isinstance(seed_or_rng, np.random.Generator):
        return seed_or_rng
    return np.random.default_rng(seed_or_rng)


def trial_rng(master_seed: int, *indices: int) -> np.random.Generator:
    """Independent, order-free stream for one Monte-Carlo trial.

    Streams derived from (master seed, trial indices) are identical across
    runs and independent across distinct index tuples, so trials can run in
    any order or in parallel.
    """
    return np.random.default_rng(np.random.SeedSequence([master_seed, *indices]))
