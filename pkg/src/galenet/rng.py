"""Explicitly keyed random streams.

Every stochastic operation draws from its own Philox (counter-based)
generator derived from ``(seed, *stream)``; nothing touches global state.
"""

from __future__ import annotations

import zlib

import numpy as np


def _key(part) -> int:
    if isinstance(part, str):
        return zlib.crc32(part.encode("utf-8"))
    return int(part)


def make_rng(seed: int, *stream) -> np.random.Generator:
    ss = np.random.SeedSequence([int(seed)] + [_key(p) for p in stream])
    return np.random.Generator(np.random.Philox(ss))
