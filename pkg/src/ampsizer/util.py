"""Shared plumbing: seeded random substreams and float formatting."""

from __future__ import annotations

import hashlib

import numpy as np

__all__ = ["substream", "format_float"]


def substream(seed: int, name: str) -> np.random.Generator:
    """Independent generator derived from one run seed and a stream name.

    Different names give statistically independent streams; the same
    (seed, name) pair always gives the same stream, regardless of how many
    other streams were created.  This is what makes experiments replayable
    module by module.
    """
    if seed < 0:
        raise ValueError("seed must be non-negative")
    digest = hashlib.sha256(name.encode("utf-8")).digest()
    words = [int.from_bytes(digest[i : i + 4], "little") for i in range(0, 16, 4)]
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, *words])))


def format_float(value: float) -> str:
    """Round-trip-exact text form for CSV cells."""
    return repr(float(value))
