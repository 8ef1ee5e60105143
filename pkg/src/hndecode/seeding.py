"""Deterministic seed derivation.

Every random draw in the engine comes from a `random.Random` seeded by a
hash of a path of labels (global seed, problem id, job lineage, purpose).
Deriving seeds from stable labels rather than draw order makes results
independent of the order in which jobs happen to be expanded.
"""

from __future__ import annotations

import hashlib
import random


def derive_seed(*parts: object) -> int:
    """Collapse a label path into a 64-bit seed, stable across processes."""
    h = hashlib.sha256()
    for part in parts:
        h.update(repr(part).encode("utf-8"))
        h.update(b"\x1f")
    return int.from_bytes(h.digest()[:8], "big")


def rng_for(*parts: object) -> random.Random:
    return random.Random(derive_seed(*parts))
