"""Stable 64-bit hashing shared by dedup fingerprints and sampling decisions.

Everything here must be deterministic across runs, platforms, and Python
versions, so the builtin salted ``hash()`` is never used.
"""

from __future__ import annotations

import hashlib
import struct

MASK64 = (1 << 64) - 1


def hash64(data: bytes | str, seed: int = 0) -> int:
    """Seeded 64-bit hash of a string or byte sequence."""
    if isinstance(data, str):
        data = data.encode("utf-8")
    digest = hashlib.blake2b(data, digest_size=8, salt=(seed & MASK64).to_bytes(8, "little"))
    return int.from_bytes(digest.digest(), "little")


def hash64_pair(seed: int, value: int) -> int:
    """64-bit hash of a (seed, value) pair; drives deterministic record sampling."""
    return hash64(struct.pack("<Q", value & MASK64), seed=seed)


def mix64(hashes: tuple[int, ...] | list[int]) -> int:
    """Fold a sequence of 64-bit hashes into one, order-sensitive.

    FNV-style accumulation with a splitmix64 finisher; used to turn a window
    of token hashes into a single shingle feature hash without building the
    joined string.
    """
    h = 0xCBF29CE484222325
    for t in hashes:
        h = ((h ^ t) * 0x100000001B3) & MASK64
    h = ((h ^ (h >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    h = ((h ^ (h >> 27)) * 0x94D049BB133111EB) & MASK64
    return h ^ (h >> 31)
