"""Deterministic random number generation.

All randomness in the package flows through SeededRng so that a run is fully
determined by its integer seeds. Streams are backed by PCG64; the same seed
gives the same stream on every platform for a given numpy version.
"""

from __future__ import annotations

import numpy as np


class SeededRng:
    """A seeded random stream with support for deriving child streams.

    ``derive(*keys)`` returns an independent stream keyed by (seed, *keys),
    e.g. one stream per epoch for shuffling, without consuming state from
    the parent.
    """

    def __init__(self, seed: int, _keys: tuple[int, ...] = ()):
        self.seed = int(seed)
        self._keys = _keys
        self._gen = np.random.Generator(
            np.random.PCG64(np.random.SeedSequence([self.seed, *_keys]))
        )

    def derive(self, *keys: int) -> "SeededRng":
        return SeededRng(self.seed, self._keys + tuple(int(k) for k in keys))

    def uniform(self, low: float, high: float, shape) -> np.ndarray:
        return self._gen.uniform(low, high, size=shape).astype(np.float64, copy=False)

    def normal(self, shape) -> np.ndarray:
        return self._gen.standard_normal(size=shape, dtype=np.float64)

    def permutation(self, n: int) -> np.ndarray:
        return self._gen.permutation(n)

    def integers(self, low: int, high: int, shape=None) -> np.ndarray:
        return self._gen.integers(low, high, size=shape)

    def __repr__(self) -> str:
        return f"SeededRng(seed={self.seed}, keys={self._keys})"
