"""Deterministic named sub-seed derivation.

All randomness in an experiment flows from one root seed through named
streams ("split", "init", round index, ...) so that any stage can be
replayed in isolation. Tags are hashed with crc32, which is stable across
platforms and interpreter runs.
"""

from __future__ import annotations

import zlib

import numpy as np


def seed_sequence(root: int, *tags) -> np.random.SeedSequence:
    entropy = [int(root) % (2**63)]
    entropy.extend(zlib.crc32(str(t).encode("utf-8")) for t in tags)
    return np.random.SeedSequence(entropy)


def rng_for(root: int, *tags) -> np.random.Generator:
    return np.random.default_rng(seed_sequence(root, *tags))


def seed_for(root: int, *tags) -> int:
    """A derived 32-bit integer seed, for configs that store a plain int."""
    return int(seed_sequence(root, *tags).generate_state(1)[0])
