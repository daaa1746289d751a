"""Deterministic random number generation.

All randomness in the package flows through :class:`Rng`, a thin wrapper
around numpy's PCG64 bit generator.  PCG64 is fully specified (O'Neill's
PCG XSL-RR 128/64) and produces the same stream for the same seed on every
platform numpy supports, which is the reproducibility contract the rest of
the package relies on: identical seed, identical weights, identical
training trajectory.

A generator is single-owner.  Code that wants independent streams (e.g.
parallel workers) must take children via :meth:`Rng.split`, which derives
child seeds from the parent seed and a counter, not from the parent's
draw position.
"""

from __future__ import annotations

import numpy as np

__all__ = ["Rng"]


class Rng:
    """Seeded random stream with deterministic splitting."""

    def __init__(self, seed: int):
        self.seed = int(seed)
        self._gen = np.random.Generator(np.random.PCG64(self.seed))

    def uniform(self, low: float, high: float, size) -> np.ndarray:
        return self._gen.uniform(low, high, size)

    def normal(self, loc: float, scale: float, size) -> np.ndarray:
        return self._gen.normal(loc, scale, size)

    def integers(self, low: int, high: int, size=None):
        return self._gen.integers(low, high, size=size)

    def permutation(self, n: int) -> np.ndarray:
        return self._gen.permutation(n)

    def shuffle(self, array) -> None:
        self._gen.shuffle(array)

    def split(self, n: int) -> list["Rng"]:
        """Derive ``n`` independent child streams.

        Children depend only on ``(self.seed, index)``, so splitting is
        reproducible regardless of how much the parent has been used.
        """
        seeds = np.random.SeedSequence(entropy=self.seed).spawn(n)
        return [Rng(int(s.generate_state(1, np.uint64)[0])) for s in seeds]

    def state(self) -> dict:
        """Serializable bit-generator state (for checkpoints)."""
        return self._gen.bit_generator.state

    def set_state(self, state: dict) -> None:
        self._gen.bit_generator.state = state

    def __repr__(self) -> str:  # pragma: no cover
        return f"Rng(seed={self.seed})"
