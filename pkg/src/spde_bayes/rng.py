"""Counter-based Gaussian noise keyed by (seed, replicate, step, cell).

Draws are made in blocks of ``BLOCK_STEPS`` time steps from a Philox generator whose
key is derived from ``(seed, replicate, block)``. The value at a given
(seed, replicate, step, cell) therefore never depends on how replicates are batched,
which threads run them, or in which order blocks are requested.
"""
from __future__ import annotations

import numpy as np

BLOCK_STEPS = 64


def block_generator(seed: int, replicate: int, block: int) -> np.random.Generator:
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(int(replicate), int(block)))
    return np.random.Generator(np.random.Philox(ss))


class NoiseStream:
    """Standard normal increments xi[step, cell] for one replicate."""

    def __init__(self, seed: int, replicate: int, n_cells: int):
        if seed < 0 or seed >= 2**128:
            raise ValueError("seed must be a non-negative 128-bit integer")
        self.seed = int(seed)
        self.replicate = int(replicate)
        self.n_cells = int(n_cells)
        self._block = -1
        self._values = None

    def block(self, b: int) -> np.ndarray:
        if b != self._block:
            self._values = block_generator(self.seed, self.replicate, b).standard_normal((BLOCK_STEPS, self.n_cells))
            self._block = b
        return self._values

    def step(self, m: int) -> np.ndarray:
        return self.block(m // BLOCK_STEPS)[m % BLOCK_STEPS]


def gaussian_draws(seed: int, n: int, dim: int, stream: int = 0) -> np.ndarray:
    """Independent N(0, 1) matrix for posterior sampling, keyed by (seed, stream)."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(2**31 + int(stream),))
    return np.random.Generator(np.random.Philox(ss)).standard_normal((n, dim))
