"""Seed derivation. All randomness in the package flows from explicit 64-bit
seeds; sub-streams are derived by hashing so that parallel generation order
never changes results.
"""

from __future__ import annotations

import hashlib

import numpy as np

MASK64 = 0xFFFFFFFFFFFFFFFF


def derive_seed(*parts: object) -> int:
    """Stable 64-bit sub-seed from a root seed and any hashable labels."""
    blob = "\x1f".join(str(p) for p in parts).encode("utf-8")
    return int.from_bytes(hashlib.sha256(blob).digest()[:8], "big") & MASK64


def rng_from(*parts: object) -> np.random.Generator:
    return np.random.default_rng(derive_seed(*parts))
