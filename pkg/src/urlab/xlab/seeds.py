"""Named random streams derived from one master seed.

Each label gets its own generator seeded from ``(master_seed, hash(label))``
with a stable (non-salted) hash, so a stream never depends on which other
streams exist or on any config axis.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

LABELS = ("policy", "targets", "medium", "injector", "exploration")


def label_key(label: str) -> int:
    return int.from_bytes(hashlib.sha256(label.encode("utf-8")).digest()[:8], "little")


def stream(master_seed: int, label: str) -> np.random.Generator:
    if master_seed < 0:
        raise ValueError("seed must be non-negative")
    ss = np.random.SeedSequence([int(master_seed), label_key(label)])
    return np.random.Generator(np.random.PCG64(ss))


@dataclass
class SeedStreams:
    master_seed: int
    _cache: dict = field(default_factory=dict, repr=False)

    def get(self, label: str) -> np.random.Generator:
        """The generator for ``label``; the same object is returned on repeat calls."""
        if label not in self._cache:
            self._cache[label] = stream(self.master_seed, label)
        return self._cache[label]

    def fresh(self, label: str) -> np.random.Generator:
        return stream(self.master_seed, label)

    @property
    def policy(self):
        return self.get("policy")

    @property
    def targets(self):
        return self.get("targets")

    @property
    def medium(self):
        return self.get("medium")

    @property
    def injector(self):
        return self.get("injector")

    @property
    def exploration(self):
        return self.get("exploration")


def derive_streams(master_seed: int) -> SeedStreams:
    return SeedStreams(int(master_seed))
