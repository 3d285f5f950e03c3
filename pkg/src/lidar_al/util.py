"""Seed derivation and content hashing.

Every random decision in a run is keyed off one master seed. Independent
streams are derived by hashing the seed together with a short string label
and any integer/bytes qualifiers, so adding or removing frames never shifts
another frame's random outcomes.
"""
from __future__ import annotations

import hashlib
import struct

import numpy as np

_U64_MASK = 0xFFFFFFFFFFFFFFFF


def hash_u64(*parts) -> int:
    """Hash a mixed tuple of ints/strings/bytes to a uint64."""
    h = hashlib.blake2b(digest_size=8)
    for p in parts:
        if isinstance(p, bytes):
            h.update(b"b")
            h.update(struct.pack("<Q", len(p)))
            h.update(p)
        elif isinstance(p, str):
            b = p.encode("utf-8")
            h.update(b"s")
            h.update(struct.pack("<Q", len(b)))
            h.update(b)
        elif isinstance(p, (int, np.integer)):
            h.update(b"i")
            h.update(struct.pack("<Q", int(p) & _U64_MASK))
        else:
            raise TypeError(f"unhashable seed part: {type(p).__name__}")
    return struct.unpack("<Q", h.digest())[0]


def hash_u01(*parts) -> float:
    """Deterministic uniform draw in [0, 1) keyed by the given parts."""
    return hash_u64(*parts) / 2.0**64


def derive_seed(*parts) -> int:
    return hash_u64(*parts)


def rng_from(*parts) -> np.random.Generator:
    return np.random.default_rng(hash_u64(*parts))


def content_hash(arr: np.ndarray) -> bytes:
    """16-byte digest of an array's raw bytes (dtype/shape sensitive)."""
    h = hashlib.blake2b(digest_size=16)
    h.update(str(arr.dtype).encode())
    h.update(str(arr.shape).encode())
    h.update(np.ascontiguousarray(arr).tobytes())
    return h.digest()
