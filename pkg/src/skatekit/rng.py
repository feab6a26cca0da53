"""Portable pseudo-random streams.

SplitMix64 (Steele, Lea & Flood) seeded by FNV-1a-64 hashes of string keys,
so a stream depends only on ``(seed, key parts)`` and not on call order,
process, or platform. Conversions:

* uniform float: top 53 bits of the next word times 2**-53, in [0, 1)
* integer below n: ``(word * n) >> 64``
* standard normal: Box-Muller cosine branch on two uniforms, the first
  mapped to (0, 1] as ``1 - u``
"""

from __future__ import annotations

import math

MASK64 = (1 << 64) - 1
GOLDEN_GAMMA = 0x9E3779B97F4A7C15
FNV_OFFSET = 0xCBF29CE484222325
FNV_PRIME = 0x100000001B3


def mix64(z: int) -> int:
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def fnv1a64(data: bytes) -> int:
    h = FNV_OFFSET
    for byte in data:
        h = ((h ^ byte) * FNV_PRIME) & MASK64
    return h


def key_hash(seed: int, *parts) -> int:
    """64-bit key for ``seed`` and parts joined by the unit separator 0x1F."""
    payload = "\x1f".join(str(p) for p in parts).encode("utf-8")
    return mix64((seed & MASK64) ^ fnv1a64(payload))


class SplitMix64:
    __slots__ = ("state",)

    def __init__(self, state: int):
        self.state = state & MASK64

    @classmethod
    def for_key(cls, seed: int, *parts) -> "SplitMix64":
        return cls(key_hash(seed, *parts))

    def next_u64(self) -> int:
        self.state = (self.state + GOLDEN_GAMMA) & MASK64
        return mix64(self.state)

    def random(self) -> float:
        return (self.next_u64() >> 11) * (1.0 / (1 << 53))

    def randbelow(self, n: int) -> int:
        if n < 1:
            raise ValueError("n must be >= 1")
        return (self.next_u64() * n) >> 64

    def gauss(self) -> float:
        u1 = 1.0 - self.random()
        u2 = self.random()
        return math.sqrt(-2.0 * math.log(u1)) * math.cos(2.0 * math.pi * u2)
