"""Deterministic random-stream derivation.

Every stochastic routine in the package receives a `Stream`, a stateless
handle on a seed tree.  Children are derived from integer key paths, so the
stream for (sample 17, block kind A, block 3) is a pure function of the
master seed and of those integers.  This is what makes restriction,
resampling, and worker scheduling commute: the same key path always yields
the same generator, no matter which process asks for it or in what order.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Stream:
    """A node in a reproducible seed tree."""

    entropy: int
    key: tuple[int, ...] = ()

    @classmethod
    def from_seed(cls, seed: int) -> "Stream":
        if not isinstance(seed, int) or isinstance(seed, bool):
            raise TypeError(f"seed must be an int, got {type(seed).__name__}")
        if not 0 <= seed < 2**64:
            raise ValueError("seed must fit in 64 bits")
        return cls(entropy=seed)

    def child(self, *key: int) -> "Stream":
        for k in key:
            if not 0 <= int(k) < 2**32:
                raise ValueError("stream keys must fit in 32 bits")
        return Stream(self.entropy, self.key + tuple(int(k) for k in key))

    def generator(self) -> np.random.Generator:
        """A fresh generator at this node.  Repeated calls restart the stream."""
        return np.random.default_rng(
            np.random.SeedSequence(entropy=self.entropy, spawn_key=self.key)
        )
