"""Counter-based random-number streams.

Streams are addressed by (master_seed, stream_id) on top of the Philox
counter-based generator, so replicas can be parallelized without any shared
state: the same pair always reproduces the same sequence, distinct pairs give
statistically independent streams.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

_MASK64 = (1 << 64) - 1


def _mix64(x: int) -> int:
    # splitmix64 finalizer
    x = (x + 0x9E3779B97F4A7C15) & _MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK64
    return (x ^ (x >> 31)) & _MASK64


@dataclass(frozen=True)
class RngStream:
    master_seed: int
    stream_id: int = 0

    def generator(self) -> np.random.Generator:
        """Fresh generator positioned at the start of this stream."""
        key = np.array(
            [self.master_seed & _MASK64, self.stream_id & _MASK64],
            dtype=np.uint64,
        )
        return np.random.Generator(np.random.Philox(key=key))

    def substream(self, index: int) -> "RngStream":
        """Derive a child stream; distinct indices give independent streams."""
        child = _mix64((self.stream_id & _MASK64) ^ _mix64(index & _MASK64))
        return RngStream(self.master_seed, child)

    def substreams(self, count: int, base: int = 0):
        return [self.substream(base + i) for i in range(count)]


def as_generator(rng) -> np.random.Generator:
    """Accept an RngStream or a numpy Generator."""
    if isinstance(rng, RngStream):
        return rng.generator()
    if isinstance(rng, np.random.Generator):
        return rng
    raise TypeError(f"expected RngStream or numpy Generator, got {type(rng)!r}")
