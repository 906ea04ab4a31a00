"""xorshift64* generator, seeded through splitmix64.

Kept in pure Python so that a given seed yields the same target potential on
every platform and numpy version.  Version 1 of the stream:

    state0 = splitmix64(seed)            (replaced by a constant if zero)
    x ^= x >> 12; x ^= x << 25; x ^= x >> 27
    out = x * 0x2545F4914F6CDD1D  (mod 2**64)
    uniform = (out >> 11) * 2**-53       in [0, 1)
"""
from __future__ import annotations

STREAM_VERSION = 1
_MASK = (1 << 64) - 1


def splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & _MASK
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK
    return x ^ (x >> 31)


class XorShift64Star:
    def __init__(self, seed: int):
        state = splitmix64(seed & _MASK)
        self.state = state or 0x9E3779B97F4A7C15

    def next_u64(self) -> int:
        x = self.state
        x ^= x >> 12
        x ^= (x << 25) & _MASK
        x ^= x >> 27
        self.state = x
        return (x * 0x2545F4914F6CDD1D) & _MASK

    def uniform(self, low: float = 0.0, high: float = 1.0) -> float:
        u = (self.next_u64() >> 11) * (1.0 / (1 << 53))
        return low + (high - low) * u
