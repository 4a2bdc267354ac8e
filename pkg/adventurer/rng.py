"""
Splittable counter-based random number generation.

All randomness in the package flows from one integer seed. Child streams are
derived by name, so adding a new consumer never shifts the values drawn by an
existing one.
"""

import zlib
from typing import Sequence, Tuple

import numpy as np

INIT_STD = 0.02


class Rng:
    """
    A named node in a tree of Philox streams.

    Attributes:
        seed (int): The root seed of the tree.
        path (Tuple[int, ...]): Spawn key identifying this node below the root.
    """

    def __init__(self, seed: int, path: Tuple[int, ...] = ()):
        self.seed = int(seed)
        self.path = path
        seq = np.random.SeedSequence(entropy=self.seed, spawn_key=path)
        self.generator = np.random.Generator(np.random.Philox(seq))

    def split(self, name: str | int) -> "Rng":
        """Derive an independent child stream identified by `name`."""
        key = name if isinstance(name, int) else zlib.crc32(name.encode("utf-8"))
        return Rng(self.seed, self.path + (key,))

    def truncated_normal(
        self, shape: Sequence[int], std: float = INIT_STD, dtype=np.float32
    ) -> np.ndarray:
        """Normal samples with std `std`, redrawn until they lie within two std."""
        out = self.generator.normal(0.0, std, size=tuple(shape))
        bad = np.abs(out) > 2.0 * std
        while bad.any():
            out[bad] = self.generator.normal(0.0, std, size=int(bad.sum()))
            bad = np.abs(out) > 2.0 * std
        return out.astype(dtype)

    def uniform(self, low: float, high: float, shape: Sequence[int], dtype=np.float32):
        return self.generator.uniform(low, high, size=tuple(shape)).astype(dtype)

    def normal(self, shape: Sequence[int], std: float = 1.0, dtype=np.float32):
        return self.generator.normal(0.0, std, size=tuple(shape)).astype(dtype)

    def permutation(self, n: int) -> np.ndarray:
        return self.generator.permutation(n)

    def __repr__(self) -> str:
        return f"Rng(seed: {self.seed}, path: {self.path})"
