"""Hash primitives shared by the block model and proof-of-work.

A single SHA-256 serves both as the block hash (chaining) and as the
proof-of-work hash over ``parent_id || nonce``.
"""

import hashlib
import struct

DIGEST_SIZE = 32
FIXED_STRING = b"FixedStringZB"


def digest(data: bytes) -> bytes:
    return hashlib.sha256(data).digest()


FIXED_STRING_HASH = digest(FIXED_STRING)


def u64(value: int) -> bytes:
    return struct.pack(">Q", value)


def pow_hash(prev: bytes, nonce: int) -> int:
    """Proof-of-work hash ``H(prev || nonce)`` as a 256-bit integer."""
    return int.from_bytes(hashlib.sha256(prev + struct.pack(">Q", nonce)).digest(), "big")


def encode_fields(*fields: bytes) -> bytes:
    """Length-prefixed concatenation (u32 big-endian length before each field)."""
    return b"".join(struct.pack(">I", len(f)) + f for f in fields)
