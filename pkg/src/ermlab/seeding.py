"""Deterministic seed derivation.

All randomness in the package flows through a single master seed. Task seeds
are derived with a splitmix64 hash of (master_seed, module_tag, task_index),
so results are bit-identical for any worker count: a task's seed depends only
on its identity, never on scheduling order.
"""

from __future__ import annotations

import numpy as np

_MASK = (1 << 64) - 1


def _splitmix64(state: int) -> int:
    state = (state + 0x9E3779B97F4A7C15) & _MASK
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return z ^ (z >> 31)


def _hash_tag(tag: str) -> int:
    h = 0xCBF29CE484222325
    for byte in tag.encode("utf-8"):
        h = ((h ^ byte) * 0x100000001B3) & _MASK
    return h


def derive_seed(master_seed: int, tag: str, index: int = 0) -> int:
    """Derive a 64-bit task seed from (master_seed, module tag, task index)."""
    state = master_seed & _MASK
    state = _splitmix64(state ^ _hash_tag(tag))
    state = _splitmix64(state ^ (index & _MASK))
    return state


def rng_for(master_seed: int, tag: str, index: int = 0) -> np.random.Generator:
    """Generator seeded by the derived task seed."""
    return np.random.default_rng(derive_seed(master_seed, tag, index))
