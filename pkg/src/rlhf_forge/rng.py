"""Deterministic seed derivation.

Every random draw in the package flows through a numpy Generator seeded by
derive_seed, which hashes its arguments with sha256. Python's built-in hash()
is salted per process and must never be used for seeding.
"""

from __future__ import annotations

import hashlib

import numpy as np

_SEP = "\x1f"


def derive_seed(*parts: object) -> int:
    """Derive a stable 64-bit seed from a sequence of labels and values."""
    text = _SEP.join(str(p) for p in parts)
    digest = hashlib.sha256(text.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


def make_rng(*parts: object) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(derive_seed(*parts)))
