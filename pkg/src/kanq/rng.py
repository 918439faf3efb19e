"""Deterministic seeded randomness.

Every random draw in the package flows through an :class:`RngStream`, a
thin wrapper around the counter-based Philox 4x64 generator keyed by
(seed, stream id).  The same (seed, stream) pair yields the same sequence
on every platform.  Normal deviates use the Box-Muller transform of
uniform pairs and permutations sort uniform keys, so the full draw path
is specified by this module alone.
"""

from __future__ import annotations

import numpy as np

_MIX = 0x9E3779B97F4A7C15  # splitmix64 increment, used to derive child ids


class RngStream:
    """Counter-based random stream addressed by (seed, stream id)."""

    def __init__(self, seed: int, stream: int = 0):
        self.seed = int(seed) & 0xFFFFFFFFFFFFFFFF
        self.stream = int(stream) & 0xFFFFFFFFFFFFFFFF
        key = np.array([self.seed, self.stream], dtype=np.uint64)
        self._gen = np.random.Generator(np.random.Philox(key=key))

    def child(self, index: int) -> "RngStream":
        """Independent stream for a parallel unit (fold, trial, layer)."""
        mixed = (self.stream * 0x100000001B3 + (index + 1) * _MIX) & 0xFFFFFFFFFFFFFFFF
        return RngStream(self.seed, mixed)

    def uniform01(self, shape=None) -> np.ndarray:
        return self._gen.random(size=shape, dtype=np.float64)

    def normal(self, mu: float = 0.0, sigma: float = 1.0, shape=None) -> np.ndarray:
        size = 1 if shape is None else int(np.prod(shape))
        half = (size + 1) // 2
        u1 = self._gen.random(size=half, dtype=np.float64)
        u2 = self._gen.random(size=half, dtype=np.float64)
        r = np.sqrt(-2.0 * np.log1p(-u1))  # log1p(-u) avoids log(0)
        z = np.concatenate([r * np.cos(2 * np.pi * u2), r * np.sin(2 * np.pi * u2)])[:size]
        out = mu + sigma * z
        if shape is None:
            return float(out[0])
        return out.reshape(shape)

    def permutation(self, n: int) -> np.ndarray:
        return np.argsort(self._gen.random(size=n, dtype=np.float64), kind="stable")

    def integers(self, low: int, high: int, shape=None) -> np.ndarray:
        """Uniform integers in [low, high) via scaled uniforms."""
        u = self._gen.random(size=shape, dtype=np.float64)
        return (low + np.floor(u * (high - low))).astype(np.int64)
