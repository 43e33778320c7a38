"""Self-contained 64-bit deterministic random generator.

Splits, shuffles, and every other random decision in this package flow
through this generator rather than a platform RNG, so that a (seed,
inputs) pair yields byte-identical results on any machine or Python
version. The state advance is the splitmix64 finalizer: add the golden
gamma, then two xorshift-multiply mixing rounds.
"""
from __future__ import annotations

import math

_MASK = (1 << 64) - 1
_GAMMA = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB


def mix(*parts: int) -> int:
    """Fold several integers into one 64-bit seed.

    Used to derive independent substreams (per class, per pool, per run)
    from a base seed; mixing is order-sensitive.
    """
    acc = 0
    for p in parts:
        acc = (acc ^ (p & _MASK)) & _MASK
        acc = (acc + _GAMMA) & _MASK
        acc = ((acc ^ (acc >> 30)) * _MIX1) & _MASK
        acc = ((acc ^ (acc >> 27)) * _MIX2) & _MASK
        acc = acc ^ (acc >> 31)
    return acc


class SplitMix64:
    def __init__(self, seed: int):
        self._state = seed & _MASK

    def next_u64(self) -> int:
        self._state = (self._state + _GAMMA) & _MASK
        z = self._state
        z = ((z ^ (z >> 30)) * _MIX1) & _MASK
        z = ((z ^ (z >> 27)) * _MIX2) & _MASK
        return z ^ (z >> 31)

    def bounded(self, n: int) -> int:
        """Unbiased integer in [0, n) via rejection sampling."""
        if n <= 0:
            raise ValueError("bound must be positive")
        limit = _MASK - (_MASK + 1) % n
        while True:
            v = self.next_u64()
            if v <= limit:
                return v % n

    def uniform(self) -> float:
        """Float in [0, 1) from the top 53 bits."""
        return (self.next_u64() >> 11) * (1.0 / (1 << 53))

    def gauss(self) -> float:
        """Standard normal via Box-Muller (one value per call, no caching,
        so the draw count stays predictable)."""
        u1 = self.uniform()
        while u1 == 0.0:
            u1 = self.uniform()
        u2 = self.uniform()
        return math.sqrt(-2.0 * math.log(u1)) * math.cos(2.0 * math.pi * u2)

    def shuffle(self, items: list) -> None:
        """In-place Fisher-Yates."""
        for i in range(len(items) - 1, 0, -1):
            j = self.bounded(i + 1)
            items[i], items[j] = items[j], items[i]

    def sample(self, items: list, k: int) -> list:
        """k items without replacement; order is the shuffled prefix."""
        pool = list(items)
        self.shuffle(pool)
        return pool[:k]
