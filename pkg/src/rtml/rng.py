"""Seeded random streams. Nothing in the package touches global randomness."""

from __future__ import annotations

import zlib

import numpy as np

_MASK64 = (1 << 64) - 1


def _word(part: int | str) -> int:
    if isinstance(part, str):
        return zlib.crc32(part.encode("utf-8"))
    return int(part) & _MASK64


def derive_seed(seed: int, *stream: int | str) -> int:
    """Child 64-bit seed for ``(seed, *stream)``."""
    ss = np.random.SeedSequence([_word(seed), *(_word(p) for p in stream)])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def make_rng(seed: int, *stream: int | str) -> np.random.Generator:
    """PCG64 generator keyed by a seed and an optional stream path."""
    ss = np.random.SeedSequence([_word(seed), *(_word(p) for p in stream)])
    return np.random.Generator(np.random.PCG64(ss))
