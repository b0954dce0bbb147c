"""Reproducible random substreams.

Every random draw in the package comes from a generator keyed by
``(master seed, replicate, level, purpose)``. The key is hashed to 128 bits,
so streams for different replicates or levels are independent and can be
produced in any order, by any worker, with identical results.
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass

import numpy as np

MASK64 = (1 << 64) - 1


def substream_key(seed: int, replicate: int, level: int, purpose: str) -> int:
    h = hashlib.blake2b(digest_size=16, person=b"gffx-stream-v1")
    h.update(struct.pack("<QQq", seed & MASK64, replicate & MASK64, level))
    h.update(purpose.encode())
    return int.from_bytes(h.digest(), "little")


def substream(seed: int, replicate: int, level: int, purpose: str) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(substream_key(seed, replicate, level, purpose)))


@dataclass(frozen=True)
class RngStream:
    """A (seed, replicate) pair handing out per-level, per-purpose generators."""

    seed: int
    replicate: int = 0

    def generator(self, level: int = 0, purpose: str = "default") -> np.random.Generator:
        return substream(self.seed, self.replicate, level, purpose)

    def child(self, replicate: int) -> "RngStream":
        return RngStream(self.seed, replicate)


def as_stream(rng) -> RngStream:
    """Accept an ``RngStream`` or a bare integer seed."""
    if isinstance(rng, RngStream):
        return rng
    if isinstance(rng, (int, np.integer)):
        return RngStream(int(rng))
    raise TypeError(f"expected RngStream or int seed, got {type(rng).__name__}")
