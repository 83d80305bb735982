"""Stable seed derivation so parallel execution order cannot change results."""

from __future__ import annotations

import hashlib


def stable_seed(*parts: str | int) -> int:
    """Derive a 64-bit seed from a sequence of ids, identically across
    runs, platforms, and worker counts."""
    text = "|".join(str(p) for p in parts)
    digest = hashlib.blake2b(text.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little")
