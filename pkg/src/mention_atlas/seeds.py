"""Deterministic seed derivation.

Every random stage of the pipeline draws from its own named sub-seed so a
single root seed reproduces any stage independently of the others.
"""

from __future__ import annotations

import hashlib

import numpy as np


def derive_seed(root: int, stage: str) -> int:
    """Return a stable 64-bit sub-seed for a named pipeline stage."""
    digest = hashlib.sha256(f"{root}:{stage}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big")


def stage_rng(root: int, stage: str) -> np.random.Generator:
    """Generator seeded with the named sub-seed of ``root``."""
    return np.random.default_rng(derive_seed(root, stage))
