"""Deterministic seed derivation.

Every random decision in the library is made by a numpy Generator whose
seed is derived from a single root seed plus a path of string/int tokens.
Derivation goes through SHA-256 so it is stable across platforms and
Python versions (unlike the builtin hash()).
"""

import hashlib

import numpy as np


def derive_seed(root: int, *tokens) -> int:
    """Derive a child seed from `root` and a token path.

    Tokens may be strings or ints. The same (root, tokens) always yields
    the same seed; distinct paths yield independent-looking seeds.
    """
    material = repr((int(root),) + tuple(tokens)).encode("utf-8")
    digest = hashlib.sha256(material).digest()
    return int.from_bytes(digest[:8], "big")


def rng_for(root: int, *tokens) -> np.random.Generator:
    """Generator seeded by derive_seed(root, *tokens)."""
    return np.random.default_rng(derive_seed(root, *tokens))
