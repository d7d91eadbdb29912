"""Counter-based random number streams for reproducible parallel Monte Carlo.

Every stochastic component draws from a stream keyed by
``(master_seed, replica_index, role)``.  The mapping is injective for
practical purposes (128-bit BLAKE2 digest) and stable across platforms,
runs, and thread counts.  Array-valued noise uses numpy's Philox bit
generator (itself counter-based); the event-driven kernels use a 64-bit
SplitMix-style mixer that is trivial to inline under numba.
"""

from __future__ import annotations

import hashlib

import numpy as np

__all__ = ["seed_stream", "philox_generator", "mix64_key"]

_MASK64 = (1 << 64) - 1


def seed_stream(master_seed: int, replica_index: int, role: str) -> int:
    """Derive a 128-bit stream key from (master_seed, replica_index, role)."""
    payload = b"\x00".join(
        [
            int(master_seed).to_bytes(8, "little", signed=False),
            int(replica_index).to_bytes(8, "little", signed=False),
            role.encode("utf-8"),
        ]
    )
    digest = hashlib.blake2b(payload, digest_size=16).digest()
    return int.from_bytes(digest, "little")


def philox_generator(master_seed: int, replica_index: int, role: str) -> np.random.Generator:
    """Philox-backed numpy Generator for the given stream."""
    key = seed_stream(master_seed, replica_index, role)
    return np.random.Generator(np.random.Philox(key=key))


def mix64_key(master_seed: int, replica_index: int, role: str) -> np.uint64:
    """64-bit key for the numba event kernels (low half of the stream key)."""
    return np.uint64(seed_stream(master_seed, replica_index, role) & _MASK64)
