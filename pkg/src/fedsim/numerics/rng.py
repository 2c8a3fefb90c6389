"""Counter-based random streams keyed by (seed, purpose, round, client).

Every consumer of randomness asks for its own stream, so the order in which
clients train (or whether they train in parallel) never changes a draw.
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass

import numpy as np

_MASK64 = (1 << 64) - 1


def purpose_id(purpose: str) -> int:
    """Stable 32-bit id for a purpose label (crc32, platform independent)."""
    return zlib.crc32(purpose.encode("utf-8"))


@dataclass(frozen=True)
class RngStream:
    seed: int
    stream: tuple[int, ...] = ()

    def __post_init__(self):
        if not 0 <= self.seed <= _MASK64:
            raise ValueError(f"seed must fit in 64 unsigned bits, got {self.seed}")
        for s in self.stream:
            if not 0 <= s <= _MASK64:
                raise ValueError(f"stream id {s} must fit in 64 unsigned bits")

    @classmethod
    def for_purpose(cls, seed: int, purpose: str, round_idx: int = 0, client: int = 0) -> "RngStream":
        return cls(seed, (purpose_id(purpose), round_idx, client))

    def child(self, *ids: int) -> "RngStream":
        return RngStream(self.seed, self.stream + tuple(ids))

    def generator(self) -> np.random.Generator:
        """A fresh Philox generator positioned at the start of this stream."""
        ss = np.random.SeedSequence(self.seed, spawn_key=self.stream)
        return np.random.Generator(np.random.Philox(ss))


def stream(seed: int, purpose: str, round_idx: int = 0, client: int = 0) -> np.random.Generator:
    return RngStream.for_purpose(seed, purpose, round_idx, client).generator()
