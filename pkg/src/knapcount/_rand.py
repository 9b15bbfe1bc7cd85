"""Deterministic RNG stream derivation.

Every random choice in the library draws from a numpy Philox generator whose
key is derived by hashing (seed, construction path).  Philox is counter
based, so streams for different paths never collide and replaying a path
gives bit-identical draws regardless of evaluation order.
"""

import hashlib

import numpy as np


def stream(seed, *path):
    """Generator keyed by the root seed and a construction path."""
    tag = ("%d|" % seed) + "/".join(str(p) for p in path)
    digest = hashlib.sha256(tag.encode()).digest()
    key = int.from_bytes(digest[:16], "little")
    return np.random.Generator(np.random.Philox(key=key))


def uniform_int(rng, lo, hi):
    """Uniform integer in [lo, hi], supporting ranges beyond 64 bits."""
    if hi < lo:
        raise ValueError("empty range")
    span = hi - lo + 1
    if span <= (1 << 63):
        return lo + int(rng.integers(0, span))
    bits = span.bit_length()
    words = (bits + 63) // 64
    while True:
        v = 0
        for w in rng.integers(0, 1 << 63, size=2 * words, dtype=np.int64):
            v = (v << 63) | int(w)
        v &= (1 << bits) - 1
        if v < span:
            return lo + v
