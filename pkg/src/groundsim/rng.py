"""Deterministic random streams for reproducible runs.

xoshiro256** generators seeded through splitmix64, one independent
stream per consumer.  Sensor streams hash the sensor name into the
world seed so adding a sensor never disturbs the draws of another.
"""

from __future__ import annotations

import math

_MASK64 = (1 << 64) - 1


def _rotl(x: int, k: int) -> int:
    return ((x << k) | (x >> (64 - k))) & _MASK64


def splitmix64(state: int):
    """One splitmix64 step: (next_state, output)."""
    state = (state + 0x9E3779B97F4A7C15) & _MASK64
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return state, z ^ (z >> 31)


def fnv1a64(text: str) -> int:
    """FNV-1a over the UTF-8 bytes, for stable name-derived seeds."""
    h = 0xCBF29CE484222325
    for byte in text.encode("utf-8"):
        h = ((h ^ byte) * 0x100000001B3) & _MASK64
    return h


class Rng:
    """xoshiro256** stream with uniform and gaussian draws."""

    def __init__(self, seed: int):
        state = seed & _MASK64
        self.s = []
        for _ in range(4):
            state, word = splitmix64(state)
            self.s.append(word)

    @classmethod
    def for_sensor(cls, world_seed: int, name: str) -> "Rng":
        return cls((world_seed & _MASK64) ^ fnv1a64(name))

    def next_u64(self) -> int:
        s = self.s
        result = (_rotl((s[1] * 5) & _MASK64, 7) * 9) & _MASK64
        t = (s[1] << 17) & _MASK64
        s[2] ^= s[0]
        s[3] ^= s[1]
        s[1] ^= s[2]
        s[0] ^= s[3]
        s[2] ^= t
        s[3] = _rotl(s[3], 45)
        return result

    def uniform(self) -> float:
        """Uniform in [0, 1) with 53-bit resolution."""
        return (self.next_u64() >> 11) * (1.0 / (1 << 53))

    def gaussian(self, mean: float = 0.0, sigma: float = 1.0) -> float:
        """Box-Muller; one fresh pair of uniforms per draw keeps the
        stream position independent of caller interleaving."""
        u1 = self.uniform()
        u2 = self.uniform()
        z = math.sqrt(-2.0 * math.log(1.0 - u1)) * math.cos(2.0 * math.pi * u2)
        return mean + sigma * z
