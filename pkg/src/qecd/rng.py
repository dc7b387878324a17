"""Seed derivation: one user seed fans out into labeled, independent streams."""

from __future__ import annotations

import hashlib

import numpy as np


def _label_words(label: str) -> list[int]:
    digest = hashlib.sha256(label.encode("utf-8")).digest()
    return [int.from_bytes(digest[i:i + 4], "little") for i in range(0, 16, 4)]


def derive_rng(seed: int, *labels) -> np.random.Generator:
    """Counter-based generator for (seed, labels...); order of calls elsewhere
    can never perturb it."""
    entropy = [int(seed) & 0xFFFFFFFF, (int(seed) >> 32) & 0xFFFFFFFF]
    for lab in labels:
        if isinstance(lab, int):
            entropy.append(lab & 0xFFFFFFFF)
        else:
            entropy.extend(_label_words(str(lab)))
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(entropy)))
