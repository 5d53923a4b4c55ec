"""Portable seeded randomness.

Every randomized step in the package (sampling, fold shuffles, SGD order,
embedding initialisation) draws from SplitMix64 so that a given seed produces
the same stream on any platform or implementation language:

    state += 0x9E3779B97F4A7C15              (mod 2**64)
    z = state
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9 (mod 2**64)
    z = (z ^ (z >> 27)) * 0x94D049BB133111EB (mod 2**64)
    return z ^ (z >> 31)

Bounded integers use rejection sampling on the raw 64-bit output, shuffles
are Fisher-Yates from the last index down, and unit floats take the top 53
bits.
"""

from __future__ import annotations

from typing import MutableSequence, Sequence, TypeVar

import numpy as np

MASK64 = (1 << 64) - 1
GOLDEN_GAMMA = 0x9E3779B97F4A7C15
_M1 = 0xBF58476D1CE4E5B9
_M2 = 0x94D049BB133111EB

T = TypeVar("T")


def mix64(z: int) -> int:
    z = ((z ^ (z >> 30)) * _M1) & MASK64
    z = ((z ^ (z >> 27)) * _M2) & MASK64
    return z ^ (z >> 31)


class SplitMix64:
    """Sequential SplitMix64 generator."""

    def __init__(self, seed: int) -> None:
        self.state = seed & MASK64

    def next_u64(self) -> int:
        self.state = (self.state + GOLDEN_GAMMA) & MASK64
        return mix64(self.state)

    def below(self, n: int) -> int:
        """Uniform integer in ``[0, n)`` without modulo bias."""
        if n <= 0:
            raise ValueError("n must be positive")
        limit = (1 << 64) - ((1 << 64) % n)
        while True:
            x = self.next_u64()
            if x < limit:
                return x % n

    def random(self) -> float:
        return (self.next_u64() >> 11) * (1.0 / (1 << 53))

    def shuffle(self, items: MutableSequence[T]) -> None:
        for i in range(len(items) - 1, 0, -1):
            j = self.below(i + 1)
            items[i], items[j] = items[j], items[i]

    def sample(self, items: Sequence[T], k: int) -> list[T]:
        """``k`` items drawn without replacement, in draw order."""
        if k > len(items):
            raise ValueError(f"cannot draw {k} items from {len(items)}")
        pool = list(items)
        # partial Fisher-Yates from the front
        for i in range(k):
            j = i + self.below(len(pool) - i)
            pool[i], pool[j] = pool[j], pool[i]
        return pool[:k]


def derive_seed(seed: int, *salt: int | str) -> int:
    """Independent sub-seed for a named purpose (e.g. one per epoch or fold)."""
    h = mix64((seed + GOLDEN_GAMMA) & MASK64)
    for s in salt:
        if isinstance(s, str):
            for b in s.encode("utf-8"):
                h = mix64(((h ^ b) + GOLDEN_GAMMA) & MASK64)
        else:
            h = mix64(((h ^ (s & MASK64)) + GOLDEN_GAMMA) & MASK64)
    return h


def splitmix64_stream(seed: int, counters: np.ndarray) -> np.ndarray:
    """Vectorised random access into the SplitMix64 stream.

    Element ``c`` (0-based) is the ``c+1``-th output of ``SplitMix64(seed)``.
    """
    c = np.asarray(counters, dtype=np.uint64)
    with np.errstate(over="ignore"):
        z = np.uint64(seed & MASK64) + (c + np.uint64(1)) * np.uint64(GOLDEN_GAMMA)
        z = (z ^ (z >> np.uint64(30))) * np.uint64(_M1)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(_M2)
        z = z ^ (z >> np.uint64(31))
    return z


def unit_floats(bits: np.ndarray) -> np.ndarray:
    """Map raw 64-bit draws to floats in ``[0, 1)``."""
    return (bits >> np.uint64(11)).astype(np.float64) * (1.0 / (1 << 53))
