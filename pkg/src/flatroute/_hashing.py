"""Deterministic hashing helpers shared by every layer.

All protocol decisions that look random (landmark election draws, sloppy
group membership, finger targets) are derived from SHA-256 so that results
are reproducible across runs, platforms and process boundaries, and so that
each node's draw depends only on its own name plus the experiment seed.
"""

from __future__ import annotations

import hashlib

MASK64 = (1 << 64) - 1


def hash_name(name: str) -> int:
    """64-bit hash of a node name: the top 64 bits of SHA-256(name)."""
    digest = hashlib.sha256(name.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big")


def derived_u64(*parts: object) -> int:
    """Deterministic 64-bit value derived from a tuple of labels.

    Used for per-node election draws, per-node RNG seeds and similar, so a
    node's outcome never depends on iteration order or on other nodes.
    """
    material = "\x1f".join(str(p) for p in parts).encode("utf-8")
    digest = hashlib.sha256(material).digest()
    return int.from_bytes(digest[:8], "big")


def derived_uniform(*parts: object) -> float:
    """Deterministic float in [0, 1) derived from a tuple of labels."""
    return derived_u64(*parts) / 2.0**64


def prefix_bits(h: int, k: int) -> int:
    """The first (most significant) k bits of a 64-bit hash; k=0 gives 0."""
    if k <= 0:
        return 0
    if k >= 64:
        return h & MASK64
    return (h & MASK64) >> (64 - k)


def common_prefix_len(a: int, b: int) -> int:
    """Number of leading bits shared by two 64-bit hashes (64 if equal)."""
    x = (a ^ b) & MASK64
    return 64 - x.bit_length()
