"""Deterministic fan-out of one master seed into named substreams.

Every source of randomness in the pipeline (splitting, parameter init,
neighbor sampling, VAE noise, ...) draws from ``rng_for(seed, label, ...)``
so components are independently reproducible from a single config seed.
"""

from __future__ import annotations

import zlib

import numpy as np

__all__ = ["rng_for", "substream_key"]


def substream_key(*labels) -> list:
    """Stable integer key for a substream label tuple."""
    key = []
    for lab in labels:
        if isinstance(lab, (int, np.integer)):
            key.append(int(lab))
        else:
            key.append(zlib.crc32(str(lab).encode("utf-8")))
    return key


def rng_for(seed: int, *labels) -> np.random.Generator:
    """Generator seeded by (seed, labels); same inputs, same stream."""
    return np.random.default_rng(np.random.SeedSequence([int(seed)] + substream_key(*labels)))
