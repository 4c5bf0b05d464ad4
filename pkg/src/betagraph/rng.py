"""Deterministic random streams.

Every stochastic component draws from a numpy Generator backed by the
PCG64 bit generator, seeded through SeedSequence.  PCG64 is a fixed,
versioned algorithm: the same seed yields the same stream on every
platform and every run.  Substreams for independent consumers (weight
init, dropout, splits, ...) are derived with distinct spawn keys so that
adding a consumer never perturbs the others.
"""

from __future__ import annotations

import numpy as np


def rng(seed: int) -> np.random.Generator:
    """Root deterministic stream for a 64-bit seed."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed))))


def substream(seed: int, key: int) -> np.random.Generator:
    """Independent stream #key derived from seed; stable under new keys."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(int(key),))
    return np.random.Generator(np.random.PCG64(ss))
