"""Seeded pseudo-random numbers with a pinned algorithm.

Workload generation and the randomized scheduler must produce identical
streams for identical seeds, on any host and any Python version. The
stdlib Mersenne Twister offers no such cross-version guarantee for the
derived (float, choice, ...) methods, so we carry a small fixed
generator instead: the splitmix64 state update (add the 64-bit golden
gamma, then two xor-multiply finalization rounds). Golden files depend
on this exact algorithm; do not change the constants.
"""

from __future__ import annotations

_MASK64 = (1 << 64) - 1
_GAMMA = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB


class SplitMix64:
    """64-bit splitmix generator; one instance per independent stream."""

    __slots__ = ("_state",)

    def __init__(self, seed: int):
        self._state = seed & _MASK64

    def next_u64(self) -> int:
        self._state = (self._state + _GAMMA) & _MASK64
        z = self._state
        z = ((z ^ (z >> 30)) * _MIX1) & _MASK64
        z = ((z ^ (z >> 27)) * _MIX2) & _MASK64
        return z ^ (z >> 31)

    def uniform(self) -> float:
        """Float in [0, 1) with 53 random bits."""
        return (self.next_u64() >> 11) * (1.0 / (1 << 53))

    def randrange(self, n: int) -> int:
        """Integer in [0, n). Uses rejection sampling to stay unbiased."""
        if n <= 0:
            raise ValueError("randrange() bound must be positive")
        # accept draws below the largest multiple of n that fits in 64 bits
        threshold = ((_MASK64 + 1) // n) * n
        while True:
            draw = self.next_u64()
            if draw < threshold:
                return draw % n

    def randint(self, lo: int, hi: int) -> int:
        """Integer in [lo, hi] inclusive."""
        if hi < lo:
            raise ValueError("randint() empty range")
        return lo + self.randrange(hi - lo + 1)

    def choice(self, seq):
        return seq[self.randrange(len(seq))]

    def split(self) -> "SplitMix64":
        """Derive an independent child stream."""
        return SplitMix64(self.next_u64())
