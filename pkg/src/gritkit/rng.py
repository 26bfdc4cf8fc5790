"""SplitMix64 pseudo-random generator.

All stochastic pieces of the toolkit (graph samplers, parameter init, corpus
selection) draw from this generator so that a given seed produces the same
bit pattern in any language that implements SplitMix64.

Derived quantities:

* ``random()`` -> top 53 bits of the next word scaled by 2**-53, in [0, 1).
* ``randbelow(m)`` -> ``(word * m) >> 64`` (multiply-shift; bias < m / 2**64).
"""

from __future__ import annotations

_MASK = (1 << 64) - 1


class SplitMix64:
    __slots__ = ("state",)

    def __init__(self, seed: int) -> None:
        self.state = seed & _MASK

    def next_u64(self) -> int:
        self.state = (self.state + 0x9E3779B97F4A7C15) & _MASK
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
        return z ^ (z >> 31)

    def random(self) -> float:
        return (self.next_u64() >> 11) * (1.0 / (1 << 53))

    def uniform(self, lo: float, hi: float) -> float:
        return lo + (hi - lo) * self.random()

    def randbelow(self, m: int) -> int:
        if m <= 0:
            raise ValueError("randbelow needs a positive bound")
        return (self.next_u64() * m) >> 64

    def randint(self, lo: int, hi: int) -> int:
        """Uniform integer in the closed range [lo, hi]."""
        return lo + self.randbelow(hi - lo + 1)

    def shuffle(self, items: list) -> None:
        # Fisher-Yates, high index first
        for i in range(len(items) - 1, 0, -1):
            j = self.randbelow(i + 1)
            items[i], items[j] = items[j], items[i]

    def spawn(self) -> "SplitMix64":
        """Independent child stream seeded from the next output word."""
        return SplitMix64(self.next_u64())
