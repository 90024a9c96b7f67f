"""Deterministic seed derivation.

Every random draw in the package flows from one top-level integer seed.
Child seeds are derived by hashing (seed, label, index) so that adding a
consumer never shifts the streams of existing ones.
"""
from __future__ import annotations

import hashlib


def child_seed(seed: int, label: str, index: int = 0) -> int:
    """Derive a stable 64-bit child seed for a named consumer."""
    digest = hashlib.sha256(f"{seed}/{label}/{index}".encode()).digest()
    return int.from_bytes(digest[:8], "little")
