"""Portable 64-bit PRNG so generated pages are reproducible in any language.

Generator: xorshift64* (shifts 12, 25, 27; multiplier 0x2545F4914F6CDD1D),
output is the full 64-bit product. Seeds are passed through one SplitMix64
step first so that small or zero seeds still give a nonzero state.

Per-page seeds: ``derive_seed(seed, index) = splitmix64(seed ^ splitmix64(index))``.

Floats take the top 53 bits: ``(next() >> 11) * 2**-53`` in ``[0, 1)``.
Integers in ``[lo, hi]`` use ``lo + (next() >> 11) % (hi - lo + 1)``; the
modulo bias is below 2**-40 for the ranges used here.
"""

from __future__ import annotations

MASK64 = (1 << 64) - 1
XORSHIFT_MULT = 0x2545F4914F6CDD1D


def splitmix64(x: int) -> int:
    z = (x + 0x9E3779B97F4A7C15) & MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def derive_seed(seed: int, index: int) -> int:
    return splitmix64((seed & MASK64) ^ splitmix64(index & MASK64))


class XorShift64Star:
    def __init__(self, seed: int):
        state = splitmix64(seed & MASK64)
        self.state = state or 0x9E3779B97F4A7C15

    def next_u64(self) -> int:
        x = self.state
        x ^= x >> 12
        x ^= (x << 25) & MASK64
        x ^= x >> 27
        self.state = x
        return (x * XORSHIFT_MULT) & MASK64

    def random(self) -> float:
        return (self.next_u64() >> 11) * (1.0 / (1 << 53))

    def uniform(self, lo: float, hi: float) -> float:
        return lo + (hi - lo) * self.random()

    def randint(self, lo: int, hi: int) -> int:
        """Integer in the closed range ``[lo, hi]``."""
        if hi < lo:
            raise ValueError("empty range")
        return lo + (self.next_u64() >> 11) % (hi - lo + 1)
