"""Portable, bit-exact random streams for disorder realizations.

The generator is xorshift64* seeded through splitmix64, with standard
normals produced by the Box-Muller transform.  Everything is plain integer
arithmetic on 64-bit words, so a given ``(seed, stream ids...)`` pair yields
the same doubles on every platform and in every language that follows the
recipe below.

Recipe
------
* ``splitmix64(x)``::

      x = (x + 0x9E3779B97F4A7C15) mod 2**64
      z = x
      z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) mod 2**64
      z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) mod 2**64
      return z ^ (z >> 31)

* stream state: ``s = splitmix64(seed)``, then for every stream id ``i``:
  ``s = splitmix64(s ^ i)``.  A zero state is replaced by
  ``0x9E3779B97F4A7C15``.
* ``xorshift64*`` step::

      s ^= s >> 12; s ^= (s << 25) mod 2**64; s ^= s >> 27
      return (s * 0x2545F4914F6CDD1D) mod 2**64

* uniform in (0, 1]: ``((x >> 11) + 1) * 2**-53``.
* Box-Muller: with ``u1, u2`` consecutive uniforms,
  ``r = sqrt(-2 ln u1)``; emit ``r cos(2 pi u2)`` then ``r sin(2 pi u2)``.
"""

from __future__ import annotations

import math

import numpy as np

MASK64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15


def splitmix64(x: int) -> int:
    x = (x + GOLDEN) & MASK64
    z = x
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def derive_seed(seed: int, *stream_ids: int) -> int:
    """Mix a base seed with any number of non-negative stream ids."""
    s = splitmix64(seed & MASK64)
    for i in stream_ids:
        s = splitmix64(s ^ (i & MASK64))
    return s or GOLDEN


class XorShift64Star:
    """xorshift64* generator with a Box-Muller normal sampler."""

    def __init__(self, state: int):
        state &= MASK64
        self.state = state or GOLDEN
        self._spare: float | None = None

    def next_u64(self) -> int:
        s = self.state
        s ^= s >> 12
        s ^= (s << 25) & MASK64
        s ^= s >> 27
        self.state = s
        return (s * 0x2545F4914F6CDD1D) & MASK64

    def uniform(self) -> float:
        """Uniform double on (0, 1]."""
        return ((self.next_u64() >> 11) + 1) * (1.0 / 9007199254740992.0)

    def standard_normal(self) -> float:
        if self._spare is not None:
            z, self._spare = self._spare, None
            return z
        u1 = self.uniform()
        u2 = self.uniform()
        r = math.sqrt(-2.0 * math.log(u1))
        theta = 2.0 * math.pi * u2
        self._spare = r * math.sin(theta)
        return r * math.cos(theta)

    def normals(self, n: int) -> np.ndarray:
        return np.array([self.standard_normal() for _ in range(n)], dtype=float)


def stream(seed: int, *stream_ids: int) -> XorShift64Star:
    return XorShift64Star(derive_seed(seed, *stream_ids))
