"""Deterministic 64-bit random generator used for all stochastic inputs.

Everything that consumes randomness (dataset synthesis, weight
initialization, epoch shuffles) goes through this generator so that a
seed fully determines an experiment, independent of the platform or of
any third-party RNG implementation.

The core stream is SplitMix64; Gaussians come from the Marsaglia polar
transform with a fixed consumption order (two uniforms per attempt,
spare value cached and emitted next).
"""

from __future__ import annotations

import math

_MASK64 = (1 << 64) - 1
_GAMMA = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB


class SplitMix64:
    """SplitMix64 stream with uniform, Gaussian and shuffle helpers."""

    def __init__(self, seed: int) -> None:
        self._state = seed & _MASK64
        self._spare_normal: float | None = None

    def next_u64(self) -> int:
        self._state = (self._state + _GAMMA) & _MASK64
        z = self._state
        z = ((z ^ (z >> 30)) * _MIX1) & _MASK64
        z = ((z ^ (z >> 27)) * _MIX2) & _MASK64
        return z ^ (z >> 31)

    def random(self) -> float:
        """Uniform double in the open interval (0, 1).

        53-bit mantissa; the (probability 2^-53) exact zero is rejected
        so that samples are strictly positive.
        """
        while True:
            u = (self.next_u64() >> 11) * (2.0 ** -53)
            if u > 0.0:
                return u

    def uniforms(self, n: int) -> list[float]:
        return [self.random() for _ in range(n)]

    def normal(self) -> float:
        """Standard Gaussian via the Marsaglia polar method.

        Each rejection attempt consumes exactly two uniforms (u first,
        then v); the second Gaussian of an accepted pair is cached and
        returned by the next call.
        """
        if self._spare_normal is not None:
            out = self._spare_normal
            self._spare_normal = None
            return out
        while True:
            u = 2.0 * self.random() - 1.0
            v = 2.0 * self.random() - 1.0
            s = u * u + v * v
            if 0.0 < s < 1.0:
                break
        factor = math.sqrt(-2.0 * math.log(s) / s)
        self._spare_normal = v * factor
        return u * factor

    def normals(self, n: int) -> list[float]:
        return [self.normal() for _ in range(n)]

    def randbelow(self, n: int) -> int:
        """Unbiased integer in [0, n) by rejection on the 64-bit stream."""
        if n <= 0:
            raise ValueError("n must be positive")
        limit = (_MASK64 + 1) - ((_MASK64 + 1) % n)
        while True:
            u = self.next_u64()
            if u < limit:
                return u % n

    def shuffle(self, seq) -> None:
        """In-place Fisher-Yates shuffle (descending index order)."""
        for i in range(len(seq) - 1, 0, -1):
            j = self.randbelow(i + 1)
            seq[i], seq[j] = seq[j], seq[i]
