"""Reproducible random streams.

One 64-bit master seed governs an experiment. Per-replica (or per-block)
streams are derived by hashing (master, index, ...) through SplitMix64, so
replicas can be farmed out in any order without stream reuse. Within a
stream the generator is SplitMix64 itself: a counter-based design (state
advances by a fixed odd constant, output is a bijective mix of the state),
which makes replay trivial.

Scalar simulation paths (the exact snapshot simulator, the spinal sampler)
use the `SplitMix64` class below. Numba kernels in `engine.py` inline the
same algorithm; `test_engine.py` pins the two implementations to each
other. Bulk vectorized paths (Brownian-path Monte Carlo) use numpy's
Philox, another counter-based generator, keyed by a derived seed.
"""

from __future__ import annotations

import math

import numpy as np

_MASK64 = (1 << 64) - 1
_GAMMA = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB
# 2^-53: map the top 53 bits of a u64 to [0, 1)
_TO_UNIT = 1.0 / 9007199254740992.0


def splitmix64(state: int) -> tuple[int, int]:
    """One SplitMix64 step: returns (output, next_state)."""
    state = (state + _GAMMA) & _MASK64
    z = state
    z = ((z ^ (z >> 30)) * _MIX1) & _MASK64
    z = ((z ^ (z >> 27)) * _MIX2) & _MASK64
    z ^= z >> 31
    return z, state


def derive_seed(master: int, *indices: int) -> int:
    """Derive an independent 64-bit stream seed from (master, indices).

    Each component is absorbed with one SplitMix64 step, so
    derive_seed(m, i) != derive_seed(m, j) for i != j and streams for
    different (experiment, t-point, replica) tuples never collide in
    practice.
    """
    state = master & _MASK64
    out, state = splitmix64(state)
    for ix in indices:
        state ^= (ix & _MASK64) * _MIX2 & _MASK64
        out, state = splitmix64(state)
    return out


def hash_tag(tag: str) -> int:
    """Stable 64-bit hash of a string tag (experiment kind, suite name)."""
    import hashlib

    return int.from_bytes(hashlib.blake2b(tag.encode(), digest_size=8).digest(), "little")


class SplitMix64:
    """Sequential SplitMix64 stream with the sampling helpers the exact
    simulator needs: uniforms, Exp(rate) lifetimes and standard normals
    (Marsaglia polar method, exact)."""

    __slots__ = ("state", "_spare", "_has_spare")

    def __init__(self, seed: int):
        self.state = seed & _MASK64
        self._spare = 0.0
        self._has_spare = False

    def u64(self) -> int:
        out, self.state = splitmix64(self.state)
        return out

    def uniform(self) -> float:
        """Uniform on (0, 1]; never returns 0 so log(u) is safe."""
        return ((self.u64() >> 11) + 1) * _TO_UNIT

    def exponential(self, rate: float = 1.0) -> float:
        return -math.log(self.uniform()) / rate

    def normal(self) -> float:
        if self._has_spare:
            self._has_spare = False
            return self._spare
        while True:
            v1 = 2.0 * self.uniform() - 1.0
            v2 = 2.0 * self.uniform() - 1.0
            r2 = v1 * v1 + v2 * v2
            if 0.0 < r2 < 1.0:
                f = math.sqrt(-2.0 * math.log(r2) / r2)
                self._spare = v2 * f
                self._has_spare = True
                return v1 * f

    def coin(self) -> int:
        """Fair choice in {1, 2} (spine child selection)."""
        return 1 + (self.u64() >> 63)


def bulk_generator(seed: int) -> np.random.Generator:
    """Counter-based numpy generator for vectorized Monte Carlo paths."""
    return np.random.Generator(np.random.Philox(key=seed & _MASK64))
