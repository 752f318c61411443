"""Deterministic PRNG used by the synthetic dataset generator.

splitmix64 with the public constants; the same integer stream is produced by
any conforming implementation in any language, which is what makes synthetic
fixtures reproducible byte-for-byte across platforms.
"""

from __future__ import annotations

import numpy as np

_MASK = (1 << 64) - 1
_GAMMA = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB


def _mix(z: int) -> int:
    z = ((z ^ (z >> 30)) * _MIX1) & _MASK
    z = ((z ^ (z >> 27)) * _MIX2) & _MASK
    return z ^ (z >> 31)


class SplitMix64:
    """Sequential splitmix64 stream.

    The value at position k (zero-based) is mix(seed + (k+1) * gamma), so a
    block of draws can be produced vectorized without changing the stream.
    """

    def __init__(self, seed: int):
        self._seed = seed & _MASK
        self._count = 0

    def next_u64(self) -> int:
        self._count += 1
        return _mix((self._seed + self._count * _GAMMA) & _MASK)

    def next_float(self) -> float:
        # 53-bit mantissa draw in [0, 1)
        return (self.next_u64() >> 11) * 2.0**-53

    def next_index(self, n: int) -> int:
        """Uniform integer in [0, n)."""
        if n <= 0:
            raise ValueError("n must be positive")
        return min(int(self.next_float() * n), n - 1)

    def next_float_block(self, n: int) -> np.ndarray:
        """Vectorized batch of next_float draws; advances the stream by n."""
        idx = np.arange(self._count + 1, self._count + n + 1, dtype=np.uint64)
        z = (np.uint64(self._seed) + idx * np.uint64(_GAMMA))
        z = (z ^ (z >> np.uint64(30))) * np.uint64(_MIX1)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(_MIX2)
        z = z ^ (z >> np.uint64(31))
        self._count += n
        return (z >> np.uint64(11)).astype(np.float64) * 2.0**-53
