"""Deterministic seed derivation for independent random streams."""

import zlib


def derive_seed(base: int, *tags) -> int:
    """Stable child seed for (base, tags); same inputs give the same seed on any platform."""
    digest = zlib.crc32(repr(tags).encode("utf-8"))
    return (int(base) * 2654435761 + digest) % (2**32)
