"""Deterministic derivation of independent RNG streams from a root seed.

Every stochastic step in the pipeline draws from a stream keyed by the root
seed plus string labels (stage name, patient id, ...), so per-patient or
per-workflow work can run in any order, or in parallel, without changing
results.
"""

import hashlib

import numpy as np


def derive_seed(*parts) -> int:
    """Collapse a root seed and labels into a stable 64-bit seed."""
    text = "\x1f".join(str(p) for p in parts)
    digest = hashlib.sha256(text.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


def rng_for(*parts) -> np.random.Generator:
    """A fresh PCG64 generator for the stream named by ``parts``."""
    return np.random.default_rng(derive_seed(*parts))
