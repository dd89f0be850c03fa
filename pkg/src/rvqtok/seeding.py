"""Splittable seeding.

All randomness in the toolkit flows from one base seed. Sub-seeds are
derived by hashing the base seed together with a label (module name,
step number, ...) so that adding a consumer never shifts the stream
seen by another, and results reproduce across thread counts.
"""

from __future__ import annotations

import hashlib

import numpy as np


def derive_seed(base_seed: int, label: str) -> int:
    """Return a 64-bit seed deterministically derived from (base_seed, label)."""
    digest = hashlib.sha256(f"{base_seed}:{label}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


def make_rng(base_seed: int, label: str) -> np.random.Generator:
    """A PCG64 generator keyed by (base_seed, label)."""
    return np.random.Generator(np.random.PCG64(derive_seed(base_seed, label)))
