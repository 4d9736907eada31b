"""Deterministic per-trial seed derivation.

A trial's stream is seeded by mixing the master seed with a stable hash of
the experiment id, the sweep index and the trial index through the
splitmix64 finalizer, so streams never depend on execution order.
"""
from __future__ import annotations

import hashlib

import numpy as np

MASK = (1 << 64) - 1


def splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & MASK
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & MASK
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & MASK
    return x ^ (x >> 31)


def experiment_hash(name: str) -> int:
    return int.from_bytes(hashlib.sha256(name.encode()).digest()[:8], "little")


def derive_seed(master: int, experiment: str, sweep: int, trial: int) -> int:
    s = splitmix64(master & MASK)
    for part in (experiment_hash(experiment), sweep & MASK, trial & MASK):
        s = splitmix64(s ^ part)
    return s


def trial_rng(master: int, experiment: str, sweep: int, trial: int) -> np.random.Generator:
    return np.random.default_rng(derive_seed(master, experiment, sweep, trial))
