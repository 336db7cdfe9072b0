"""Splittable random keys.

Thin functional wrapper around numpy's ``SeedSequence`` + Philox. Child keys
are derived by extending the spawn key, never by mutating the parent, so the
stream of chain k depends only on (root seed, path of split indices) and is
reproducible under any execution order.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["RngKey"]


@dataclass(frozen=True)
class RngKey:
    """Immutable random key. ``split`` derives children, ``generator`` makes a
    numpy Generator (Philox, counter based)."""

    entropy: int
    path: tuple[int, ...] = ()

    def split(self, n: int) -> tuple["RngKey", ...]:
        if n < 1:
            raise ValueError("need n >= 1 keys")
        return tuple(RngKey(self.entropy, self.path + (i,)) for i in range(n))

    def child(self, i: int) -> "RngKey":
        return RngKey(self.entropy, self.path + (int(i),))

    def generator(self) -> np.random.Generator:
        seq = np.random.SeedSequence(entropy=self.entropy, spawn_key=self.path)
        return np.random.Generator(np.random.Philox(seq))


def as_key(seed) -> RngKey:
    """Coerce an int seed or key to an RngKey."""
    if isinstance(seed, RngKey):
        return seed
    return RngKey(int(seed))
