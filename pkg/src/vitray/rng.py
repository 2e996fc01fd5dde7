"""Portable seeded randomness.

Shuffles (dataset splits, per-epoch batch order) use SplitMix64 with a
Fisher-Yates pass, so a split can be reproduced bit-for-bit in any language:

    state += 0x9E3779B97F4A7C15
    z = state
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
    z = (z ^ (z >> 27)) * 0x94D049BB133111EB
    return z ^ (z >> 31)                      (all arithmetic mod 2**64)

``randbelow(n)`` draws by rejection: with ``limit = 2**64 - (2**64 % n)``,
redraw while ``x >= limit``, then return ``x % n``. ``shuffle`` walks
``i = n-1 .. 1`` swapping ``a[i]`` with ``a[randbelow(i + 1)]``.

Independent streams come from ``derive_seed(seed, *keys)``, which feeds the
seed and each key through one SplitMix64 output step.

Stream keys used across the package: ``STREAM_SPLIT`` for dataset splits,
``(STREAM_BATCHES, epoch)`` for per-epoch batch order, ``STREAM_INIT`` for
weight init and ``STREAM_SYNTH`` for synthetic data.

Gaussian draws (weight init, synthetic noise) use numpy's PCG64 seeded from a
derived 64-bit seed.
"""

from __future__ import annotations

import numpy as np

STREAM_SPLIT = 1
STREAM_BATCHES = 2
STREAM_INIT = 3
STREAM_SYNTH = 4

MASK64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15


def _mix(z: int) -> int:
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


class SplitMix64:
    def __init__(self, seed: int):
        self.state = seed & MASK64

    def next_u64(self) -> int:
        self.state = (self.state + GOLDEN) & MASK64
        return _mix(self.state)

    def randbelow(self, n: int) -> int:
        if n <= 0:
            raise ValueError("n must be positive")
        limit = (1 << 64) - ((1 << 64) % n)
        while True:
            x = self.next_u64()
            if x < limit:
                return x % n

    def shuffle(self, items: list) -> None:
        for i in range(len(items) - 1, 0, -1):
            j = self.randbelow(i + 1)
            items[i], items[j] = items[j], items[i]


def derive_seed(seed: int, *keys: int) -> int:
    """Deterministically derive a child seed for stream ``keys``."""
    z = seed & MASK64
    for key in keys:
        z = _mix((z + GOLDEN * (1 + (key & MASK64))) & MASK64)
    return z


def permutation(n: int, seed: int) -> list[int]:
    idx = list(range(n))
    SplitMix64(seed).shuffle(idx)
    return idx


def numpy_generator(seed: int, *keys: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(derive_seed(seed, *keys)))
