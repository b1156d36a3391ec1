"""Deterministic RNG substreams.

Every randomized subsystem (generator, community detection, weight init,
negative sampling, ...) draws from its own named child stream so that adding
or removing one consumer never perturbs the others. Names are hashed with
SHA-256, so substreams are stable across platforms and Python versions.
"""

from __future__ import annotations

import hashlib

import numpy as np


def _tag_words(tag: str) -> list[int]:
    digest = hashlib.sha256(tag.encode("utf-8")).digest()
    return [int.from_bytes(digest[i : i + 4], "little") for i in range(0, 16, 4)]


def child_seed(seed: int, *tags: str) -> np.random.SeedSequence:
    entropy = [seed & 0xFFFFFFFF, (seed >> 32) & 0xFFFFFFFF]
    for tag in tags:
        entropy.extend(_tag_words(tag))
    return np.random.SeedSequence(entropy)


def child_rng(seed: int, *tags: str) -> np.random.Generator:
    """A generator for the substream named by ``tags`` under ``seed``."""
    return np.random.default_rng(child_seed(seed, *tags))
