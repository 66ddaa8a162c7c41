"""Seeded, spawnable random streams.

Every stochastic function in this package takes an ``RngStream`` and derives
child streams for its sub-tasks instead of sharing a mutable generator.  A
stream is a value object: the same (seed, path) always reproduces the same
draw sequence, and distinct paths are statistically independent (numpy
``SeedSequence`` spawn keys on top of the counter-based Philox generator).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class RngStream:
    seed: int
    path: tuple[int, ...] = ()

    def child(self, child_id: int) -> "RngStream":
        if child_id < 0:
            raise ValueError(f"child_id must be >= 0, got {child_id}")
        return RngStream(self.seed, self.path + (child_id,))

    def generator(self) -> np.random.Generator:
        """Fresh generator for this stream; identical every call."""
        ss = np.random.SeedSequence(entropy=self.seed, spawn_key=self.path)
        return np.random.Generator(np.random.Philox(ss))


def spawn_stream(parent: RngStream, child_id: int) -> RngStream:
    return parent.child(child_id)
