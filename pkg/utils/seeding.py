"""
Deterministic seed fan-out.

A single run seed is expanded into named sub-seeds so that adding a new
component never shifts the random streams of existing ones.
"""

import hashlib
from typing import Dict

import numpy as np


def derive_seed(seed: int, name: str) -> int:
    """
    Derive a 63-bit sub-seed from a run seed and a component name.

    Args:
        seed: Run-level seed
        name: Component name (e.g. 'dgan.train', 'forecaster.real.h1')

    Returns:
        Non-negative integer seed
    """
    digest = hashlib.sha256(f"{int(seed)}:{name}".encode('utf-8')).digest()
    return int.from_bytes(digest[:8], 'little') & ((1 << 63) - 1)


def rng_for(seed: int, name: str) -> np.random.Generator:
    """Return a numpy Generator seeded with derive_seed(seed, name)."""
    return np.random.default_rng(derive_seed(seed, name))


class SeedLineage:
    """
    Records every sub-seed handed out during a run.

    The lineage is written into run manifests and checkpoints.
    """

    def __init__(self, seed: int):
        self.seed = int(seed)
        self.issued: Dict[str, int] = {}

    def seed_for(self, name: str) -> int:
        sub = derive_seed(self.seed, name)
        self.issued[name] = sub
        return sub

    def rng(self, name: str) -> np.random.Generator:
        return np.random.default_rng(self.seed_for(name))

    def to_dict(self) -> dict:
        return {'seed': self.seed, 'sub_seeds': dict(sorted(self.issued.items()))}
