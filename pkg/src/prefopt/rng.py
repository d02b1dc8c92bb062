"""Deterministic random number generation.

Seeding uses splitmix64; the generator itself is xoshiro256**.  Identical
seeds produce identical draw sequences on every platform, which the
replication harness relies on for byte-identical outputs.

Bulk simulation draws (Beta posteriors, vectorized Bernoulli streams) go
through a numpy PCG64 generator seeded from the same splitmix64 stream;
PCG64 streams are likewise platform-stable.
"""

from __future__ import annotations

import numpy as np

__all__ = ["RngState", "derive_seed"]

_MASK64 = (1 << 64) - 1


def _splitmix64(state: int) -> tuple[int, int]:
    state = (state + 0x9E3779B97F4A7C15) & _MASK64
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return state, z ^ (z >> 31)


def derive_seed(base_seed: int, index: int) -> int:
    """Seed for stream `index` of a base seed: the index-th splitmix64 output."""
    state = base_seed & _MASK64
    out = 0
    for _ in range(index + 1):
        state, out = _splitmix64(state)
    return out


def _rotl(x: int, k: int) -> int:
    return ((x << k) | (x >> (64 - k))) & _MASK64


class RngState:
    """xoshiro256** generator seeded via splitmix64."""

    __slots__ = ("_s", "_spare_gaussian")

    def __init__(self, seed: int):
        state = seed & _MASK64
        s = []
        for _ in range(4):
            state, out = _splitmix64(state)
            s.append(out)
        self._s = s
        self._spare_gaussian: float | None = None

    def next_u64(self) -> int:
        s = self._s
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
        """Uniform draw in [0, 1) with 53 bits of precision."""
        return (self.next_u64() >> 11) * (2.0 ** -53)

    def gaussian(self) -> float:
        """Standard normal via Box-Muller (paired; one value cached)."""
        if self._spare_gaussian is not None:
            z = self._spare_gaussian
            self._spare_gaussian = None
            return z
        u1 = 1.0 - self.uniform()  # in (0, 1]
        u2 = self.uniform()
        r = np.sqrt(-2.0 * np.log(u1))
        theta = 2.0 * np.pi * u2
        self._spare_gaussian = float(r * np.sin(theta))
        return float(r * np.cos(theta))

    def bernoulli(self, p: float) -> int:
        return 1 if self.uniform() < p else 0

    def spawn(self) -> "RngState":
        """Independent child stream; advances this generator once."""
        return RngState(self.next_u64())

    def numpy_rng(self) -> np.random.Generator:
        """PCG64 generator for bulk draws; advances this generator once."""
        return np.random.Generator(np.random.PCG64(self.next_u64()))
