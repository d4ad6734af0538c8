"""Counter-based RNG derivation: every stream is a pure function of its keys."""

from __future__ import annotations

import zlib

import numpy as np


def _key(part) -> int:
    if isinstance(part, (int, np.integer)):
        return int(part) & 0xFFFFFFFFFFFFFFFF
    return zlib.crc32(str(part).encode("utf-8"))


def derive_seed_sequence(seed: int, *keys) -> np.random.SeedSequence:
    return np.random.SeedSequence([_key(seed), *(_key(k) for k in keys)])


def derive_rng(seed: int, *keys) -> np.random.Generator:
    """Generator for (seed, key...); independent of call order or worker count."""
    return np.random.default_rng(derive_seed_sequence(seed, *keys))


def derive_int(seed: int, *keys) -> int:
    return int(derive_seed_sequence(seed, *keys).generate_state(1, np.uint64)[0] >> 1)
