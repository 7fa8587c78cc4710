"""Named, seeded random streams.

Every random draw in the package goes through :class:`Rng`. A stream is a
64-bit seed plus a path of labels; ``split(label)`` derives an independent
child stream, so adding a new consumer never perturbs existing ones.
"""
from __future__ import annotations

import hashlib
import os

import numpy as np

SEED_ENV = "DEHAZEKIT_SEED"


def default_seed() -> int:
    return int(os.environ.get(SEED_ENV, "0"))


def _label_key(label: str) -> int:
    return int.from_bytes(hashlib.sha256(label.encode("utf-8")).digest()[:8], "little")


class Rng:
    def __init__(self, seed: int | None = None, path: tuple[int, ...] = ()):
        self.seed = (default_seed() if seed is None else int(seed)) & 0xFFFFFFFFFFFFFFFF
        self.path = tuple(path)
        ss = np.random.SeedSequence(entropy=self.seed, spawn_key=self.path)
        self.gen = np.random.Generator(np.random.PCG64(ss))

    def split(self, label: str) -> "Rng":
        return Rng(self.seed, self.path + (_label_key(label),))

    # thin pass-throughs keep call sites short
    def normal(self, loc=0.0, scale=1.0, size=None):
        return self.gen.normal(loc, scale, size)

    def uniform(self, low=0.0, high=1.0, size=None):
        return self.gen.uniform(low, high, size)

    def integers(self, low, high=None, size=None):
        return self.gen.integers(low, high, size)

    def permutation(self, n):
        return self.gen.permutation(n)

    def __repr__(self):
        return f"Rng(seed={self.seed}, path={self.path})"
