"""Deterministic seed derivation.

Every stochastic component of a run (env resets, net init, exploration
noise, target smoothing, sampler, evaluation) gets its own stream derived
from one master seed.  Derivation is a splitmix64 chain: the master value
is mixed once, then each tag is absorbed and mixed in order.  String tags
are converted to 64-bit ints with blake2b so the chain never depends on
Python's salted hash().
"""

from __future__ import annotations

import hashlib

import numpy as np

_MASK = (1 << 64) - 1


def _splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & _MASK
    z = x
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return z ^ (z >> 31)


def _tag_to_int(tag: int | str) -> int:
    if isinstance(tag, int):
        return tag & _MASK
    digest = hashlib.blake2b(tag.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little")


def derive_seed(master: int, *tags: int | str) -> int:
    """Mix a master seed with an ordered list of tags into a new 64-bit seed."""
    x = _splitmix64(master & _MASK)
    for tag in tags:
        x = _splitmix64(x ^ _tag_to_int(tag))
    return x


def make_rng(master: int, *tags: int | str) -> np.random.Generator:
    """PCG64 generator seeded from a derived seed."""
    return np.random.Generator(np.random.PCG64(derive_seed(master, *tags)))
