"""Per-trajectory noise streams.

Every trajectory owns a Philox stream keyed by (master_seed, trajectory_index),
so its noise is fixed regardless of how trajectories are batched or spread
over workers. Different policies fed the same indices see the same noise
(common random numbers).
"""
from __future__ import annotations

import math

import numpy as np

BLOCK = 256


def trajectory_rng(master_seed: int, index: int) -> np.random.Generator:
    seq = np.random.SeedSequence([int(master_seed) & 0xFFFFFFFFFFFFFFFF, int(index)])
    return np.random.Generator(np.random.Philox(seq))


class NoiseBlocks:
    """Hands out Wiener increments for a set of trajectories, ``BLOCK`` steps at a time.

    Each stream is consumed strictly in order, so the j-th increment of
    trajectory i is the same no matter which subset is drawn alongside it.
    """

    def __init__(self, master_seed: int, indices, dt: float, block: int = BLOCK):
        self.indices = np.asarray(indices, dtype=np.int64)
        self.rngs = [trajectory_rng(master_seed, i) for i in self.indices]
        self.scale = math.sqrt(dt)
        self.block = block
        self._buf = None
        self._pos = block

    def _refill(self, active):
        buf = np.zeros((len(self.rngs), self.block))
        for j in np.flatnonzero(active):
            buf[j] = self.rngs[j].standard_normal(self.block)
        self._buf = buf * self.scale
        self._pos = 0

    def next(self, active=None) -> np.ndarray:
        """Increments for the next step; rows outside ``active`` are left at zero and their streams untouched."""
        if active is None:
            active = np.ones(len(self.rngs), dtype=bool)
        if self._pos == self.block:
            self._refill(active)
        out = self._buf[:, self._pos]
        self._pos += 1
        return out
