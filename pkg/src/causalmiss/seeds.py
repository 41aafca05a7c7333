"""Deterministic seed derivation for parallel work units.

Every worker unit (imputation draw, accuracy split, replication, bootstrap
resample) gets its own seed derived by hashing the master seed together with
a label path. Results are therefore reproducible bit-for-bit regardless of
worker count or evaluation order.
"""

import hashlib

import numpy as np


def derive_seed(master: int, *labels) -> int:
    """Derive a child seed from a master seed and a label path."""
    text = str(int(master)) + "|" + "|".join(str(x) for x in labels)
    digest = hashlib.sha256(text.encode("utf-8")).hexdigest()
    return int(digest[:16], 16)


def derive_rng(master: int, *labels) -> np.random.Generator:
    """Generator seeded by ``derive_seed(master, *labels)``."""
    return np.random.default_rng(derive_seed(master, *labels))
