"""Deterministic RNG derivation.

All randomness in the toolkit flows from a single run seed. Child generators
are derived by mixing the run seed with a path of context keys (strings or
ints) through SHA-256, splitmix style, so that independent jobs (frames,
sessions, workers) never share or race on RNG state.
"""

import hashlib

import numpy as np


def _key_words(key) -> list[int]:
    if isinstance(key, (int, np.integer)):
        data = int(key).to_bytes(16, "little", signed=True)
    elif isinstance(key, str):
        data = key.encode("utf-8")
    else:
        raise TypeError(f"seed keys must be int or str, got {type(key)!r}")
    digest = hashlib.sha256(data).digest()
    return [int.from_bytes(digest[i : i + 4], "little") for i in range(0, 16, 4)]


def derive_seed_sequence(root_seed: int, *keys) -> np.random.SeedSequence:
    """Build a SeedSequence for the context identified by ``keys``."""
    entropy = [int(root_seed) & 0xFFFFFFFFFFFFFFFF]
    for key in keys:
        entropy.extend(_key_words(key))
    return np.random.SeedSequence(entropy)


def derive_rng(root_seed: int, *keys) -> np.random.Generator:
    """Child generator for (root seed, context key path)."""
    return np.random.default_rng(derive_seed_sequence(root_seed, *keys))
