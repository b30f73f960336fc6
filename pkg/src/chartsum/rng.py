"""Seedable, splittable, platform-independent random numbers.

The generator is SplitMix64 (Steele, Lea & Flood 2014): a 64-bit counter
advanced by the golden-ratio increment and passed through a fixed mixing
function. All arithmetic is done on Python ints masked to 64 bits, so output
is byte-identical across platforms and Python versions.

``split(key)`` derives an independent child stream from the *root* seed and a
key (string or int) hashed with FNV-1a, without consuming draws from the
parent. Renderers use one child per token/cell so that dropping or adding a
token never shifts the randomness of its neighbours.
"""

from __future__ import annotations

from typing import Sequence, TypeVar

from .text import fnv1a64

MASK64 = (1 << 64) - 1
GOLDEN_GAMMA = 0x9E3779B97F4A7C15

T = TypeVar("T")


def mix64(z: int) -> int:
    z &= MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


class Rng:
    """SplitMix64 stream. Not thread-safe; split per worker instead."""

    __slots__ = ("root", "_state")

    def __init__(self, seed: int = 0):
        self.root = int(seed) & MASK64
        self._state = self.root

    def next_u64(self) -> int:
        self._state = (self._state + GOLDEN_GAMMA) & MASK64
        return mix64(self._state)

    def uniform(self) -> float:
        """Float in [0, 1) with 53 random bits."""
        return (self.next_u64() >> 11) * (1.0 / (1 << 53))

    def below(self, n: int) -> int:
        """Unbiased integer in [0, n) by rejection sampling."""
        if n <= 0:
            raise ValueError("n must be positive")
        limit = (1 << 64) - ((1 << 64) % n)
        while True:
            r = self.next_u64()
            if r < limit:
                return r % n

    def randint(self, lo: int, hi: int) -> int:
        """Integer in [lo, hi] inclusive."""
        return lo + self.below(hi - lo + 1)

    def choice(self, seq: Sequence[T]) -> T:
        return seq[self.below(len(seq))]

    def shuffle(self, items: list) -> None:
        """In-place Fisher-Yates."""
        for i in range(len(items) - 1, 0, -1):
            j = self.below(i + 1)
            items[i], items[j] = items[j], items[i]

    def split(self, key: str | int) -> "Rng":
        if isinstance(key, int):
            key = str(key)
        return Rng(mix64(self.root ^ fnv1a64(key.encode("utf-8"))))
