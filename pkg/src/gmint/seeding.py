"""Named seed derivation.

Every random stream in the toolkit is derived from one top-level seed by a
label of the form ``seed:<component>:<cell-index>``, hashed with SHA-256.
"""

from __future__ import annotations

import hashlib

import numpy as np


def derive_seed(seed: int, component: str, cell: int | str = 0) -> int:
    label = f"{int(seed)}:{component}:{cell}".encode("utf-8")
    return int.from_bytes(hashlib.sha256(label).digest()[:8], "little")


def rng_for(seed: int, component: str, cell: int | str = 0) -> np.random.Generator:
    return np.random.default_rng(derive_seed(seed, component, cell))
