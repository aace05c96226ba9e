"""Stable seed derivation so randomized steps are reproducible across processes.

Python's builtin ``hash`` is salted per process; everything here goes through
blake2b instead.
"""

from __future__ import annotations

import hashlib

import numpy as np


def stable_seed(*parts: object) -> int:
    """Derive a 64-bit seed from an ordered sequence of label parts."""
    h = hashlib.blake2b(digest_size=8)
    for part in parts:
        h.update(str(part).encode("utf-8"))
        h.update(b"\x1f")
    return int.from_bytes(h.digest(), "big")


def derive_rng(*parts: object) -> np.random.Generator:
    """A numpy Generator seeded from :func:`stable_seed` of the parts."""
    return np.random.default_rng(stable_seed(*parts))
