"""Named, splittable random streams on a counter-based generator.

Every stream is identified by (seed, path). The Philox key is derived by
hashing that identity, so identical seeds reproduce identical draw sequences
across runs and platforms, and sibling streams are statistically independent.
"""

from __future__ import annotations

import hashlib

import numpy as np


class Rng:
    """One named stream; ``split`` derives an independent child stream."""

    __slots__ = ("seed", "path", "_gen")

    def __init__(self, seed: int, path: tuple[str, ...] = ()):
        self.seed = int(seed) & 0xFFFFFFFFFFFFFFFF
        self.path = tuple(str(p) for p in path)
        ident = str(self.seed) + "\x1f" + "\x1f".join(self.path)
        key = hashlib.sha256(ident.encode("utf-8")).digest()[:16]
        self._gen = np.random.Generator(
            np.random.Philox(key=int.from_bytes(key, "little"))
        )

    def split(self, name) -> "Rng":
        return Rng(self.seed, self.path + (str(name),))

    def normal(self, shape=None, scale: float = 1.0) -> np.ndarray:
        return self._gen.normal(0.0, scale, size=shape)

    def uniform(self, low: float, high: float, shape=None):
        return self._gen.uniform(low, high, size=shape)

    def integers(self, low: int, high: int, shape=None):
        out = self._gen.integers(low, high, size=shape)
        return int(out) if shape is None else out

    def random(self) -> float:
        return float(self._gen.random())

    def permutation(self, n: int) -> np.ndarray:
        return self._gen.permutation(n)

    def choice(self, n: int, size: int, replace: bool = True) -> np.ndarray:
        return self._gen.choice(n, size=size, replace=replace)

    def __repr__(self) -> str:
        return f"Rng(seed={self.seed}, path={'/'.join(self.path)})"
