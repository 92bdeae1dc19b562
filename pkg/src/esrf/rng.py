"""Counter-based noise streams for reproducible parallel simulation.

Every Gaussian block is generated by a fresh Philox generator keyed by
(seed, purpose, replication, step), so a draw depends only on its key and
never on scheduling or worker count.  Member indices map to rows of the
block, which is what lets the coupled systems reuse the exact same draws.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np


def _purpose_id(purpose: str) -> int:
    return int.from_bytes(hashlib.sha256(purpose.encode("utf-8")).digest()[:8], "little")


def gaussian_block(seed: int, purpose: str, replication: int, step: int, shape) -> np.ndarray:
    """Standard-normal array addressed purely by its key."""
    ss = np.random.SeedSequence(
        entropy=(int(seed), _purpose_id(purpose), int(replication), int(step))
    )
    gen = np.random.Generator(np.random.Philox(ss))
    return gen.standard_normal(shape)


def member_block(seed: int, purpose: str, replication: int, step: int,
                 members: int, dim: int) -> np.ndarray:
    """Per-member Gaussian draws as a (dim, members) array.

    Member j's draws are the j-th consecutive group of ``dim`` values of the
    keyed stream, so they do not depend on how many members are requested:
    runs at different ensemble sizes share the noise of their common
    members, which is what couples the arms of an ensemble-size sweep.
    """
    return gaussian_block(seed, purpose, replication, step, (members, dim)).T


@dataclass(frozen=True)
class NoiseStream:
    """Addressable stream of Gaussian draws for one purpose and replication.

    Streams with distinct (seed, purpose, replication) are statistically
    independent; the same key always reproduces the same block.
    """

    seed: int
    purpose: str
    replication: int = 0

    def normals(self, step: int, shape) -> np.ndarray:
        return gaussian_block(self.seed, self.purpose, self.replication, step, shape)

    def member_normals(self, step: int, members: int, dim: int) -> np.ndarray:
        return member_block(self.seed, self.purpose, self.replication, step, members, dim)
