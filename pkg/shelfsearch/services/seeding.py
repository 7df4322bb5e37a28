"""
Seed utilities for deterministic scene generation.

All randomness flows through numpy's PCG64 bit generator, which produces the same
stream on every platform for a given seed. Derived seeds come from SHA-256, never
from Python's salted hash().
"""
import hashlib

import numpy as np

SEED_MODULUS = 2**63


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed))


def derive_seed(*parts: int) -> int:
    """
    Stable seed from a tuple of integers, e.g. (base_seed, occluder_count, scene_index).

    Args:
        parts: Integers identifying the scene

    Returns:
        Non-negative 63-bit seed
    """
    key = ":".join(str(int(p)) for p in parts).encode("ascii")
    digest = hashlib.sha256(key).digest()
    return int.from_bytes(digest[:8], "big") % SEED_MODULUS
