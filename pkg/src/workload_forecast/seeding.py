"""Deterministic seed derivation from structured keys."""

import hashlib


def derive_seed(*parts) -> int:
    """64-bit seed from an ordered tuple of ints/strings.

    Independent of hash randomization and of execution order.
    """
    text = "\x1f".join(f"{type(p).__name__}:{p}" for p in parts)
    return int.from_bytes(hashlib.sha256(text.encode("utf-8")).digest()[:8], "little")
