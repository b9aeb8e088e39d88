"""Portable seeded noise.

The generator is the 64-bit linear congruential recurrence

    state <- (6364136223846793005 * state + 1442695040888963407) mod 2^64

seeded with ``state = seed mod 2^64``. Each draw advances the state once and
uses its top 53 bits as ``u = (state >> 11) / 2^53`` in ``[0, 1)``; a noise
value is ``amp * (2u - 1)``. Any implementation following these lines
reproduces the same sequence bit for bit.
"""
from __future__ import annotations

import numpy as np

__all__ = ["LCG64", "uniform_noise"]

_MASK = (1 << 64) - 1
MULTIPLIER = 6364136223846793005
INCREMENT = 1442695040888963407


class LCG64:
    def __init__(self, seed: int = 0):
        self.state = int(seed) & _MASK

    def next_u64(self) -> int:
        self.state = (MULTIPLIER * self.state + INCREMENT) & _MASK
        return self.state

    def random(self) -> float:
        return (self.next_u64() >> 11) * (1.0 / (1 << 53))

    def uniform(self, low: float = 0.0, high: float = 1.0, size: int | None = None):
        if size is None:
            return low + (high - low) * self.random()
        return np.array([low + (high - low) * self.random() for _ in range(int(size))])


def uniform_noise(n: int, amplitude: float, seed: int) -> np.ndarray:
    """``n`` additive noise samples uniform on ``[-amplitude, amplitude]``."""
    if amplitude == 0.0:
        return np.zeros(n)
    rng = LCG64(seed)
    u = np.array([rng.random() for _ in range(n)])
    return amplitude * (2.0 * u - 1.0)
