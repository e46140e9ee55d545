"""Node identity, canonical byte encoding, hashing, and signatures.

A node's identity is the SHA-256 digest of its public key, so an identity
cannot be claimed without the matching key pair. Claims and block headers
are serialized through one canonical, injective byte layout so hashes and
signatures are stable across runs and platforms.
"""

from __future__ import annotations

import hashlib
import math
import random
import struct
from dataclasses import dataclass
from typing import Sequence

from cryptography.exceptions import InvalidSignature
from cryptography.hazmat.primitives.asymmetric import ed25519

from blockloc.geometry import Position

NodeId = bytes

DIGEST_SIZE = 32
ZERO_DIGEST = b"\x00" * DIGEST_SIZE

# Signed 64-bit fixed-point millimeter range for encoded coordinates.
_MM_MAX = 2**63 - 1


@dataclass(frozen=True)
class KeyPair:
    """Raw Ed25519 key pair. The private key never enters any encoding."""

    public_key: bytes
    private_key: bytes


def generate_keypair(rng: random.Random) -> KeyPair:
    """Generate an Ed25519 key pair from the given RNG (same seed, same keys)."""
    seed = rng.randbytes(32)
    private = ed25519.Ed25519PrivateKey.from_private_bytes(seed)
    public = private.public_key().public_bytes_raw()
    return KeyPair(public_key=public, private_key=seed)


def derive_identity(public_key: bytes) -> NodeId:
    """Node identity: SHA-256 digest of the public key."""
    return hashlib.sha256(public_key).digest()


def sign(message: bytes, key: KeyPair) -> bytes:
    """Deterministic Ed25519 signature over the message bytes."""
    return ed25519.Ed25519PrivateKey.from_private_bytes(key.private_key).sign(message)


def verify(message: bytes, signature: bytes, public_key: bytes) -> bool:
    """True iff signature is valid for message under public_key.

    Malformed keys or signatures return False rather than raising.
    """
    try:
        ed25519.Ed25519PublicKey.from_public_bytes(public_key).verify(signature, message)
        return True
    except (InvalidSignature, ValueError):
        return False


class DecodeError(ValueError):
    """Canonical byte stream is truncated or structurally invalid."""


def meters_to_millimeters(meters: float) -> int:
    """Fixed-point coordinate: meters * 1000, rounded half away from zero."""
    if not math.isfinite(meters):
        raise ValueError(f"coordinate must be finite, got {meters}")
    mm = math.floor(abs(meters) * 1000.0 + 0.5)
    if mm > _MM_MAX:
        raise ValueError(f"coordinate magnitude exceeds fixed-point range: {meters} m")
    return mm if meters >= 0 else -mm


def millimeters_to_meters(mm: int) -> float:
    return mm / 1000.0


def _encode_bytes(data: bytes) -> bytes:
    return struct.pack(">I", len(data)) + data


def encode_claim_core(
    node_id: bytes,
    public_key: bytes,
    position: Position,
    neighbor_ids: Sequence[bytes],
) -> bytes:
    """Canonical signed-message bytes for a location claim.

    Layout: length-prefixed node_id and public_key, the position as two
    signed 8-byte big-endian millimeter values, then the neighbor list as a
    4-byte big-endian count followed by length-prefixed ids sorted ascending
    bytewise (so the encoding is order-insensitive in the input list).
    """
    parts = [
        _encode_bytes(node_id),
        _encode_bytes(public_key),
        struct.pack(">q", meters_to_millimeters(position.x)),
        struct.pack(">q", meters_to_millimeters(position.y)),
        struct.pack(">I", len(neighbor_ids)),
    ]
    parts.extend(_encode_bytes(nid) for nid in sorted(neighbor_ids))
    return b"".join(parts)


def encode_claim(
    node_id: bytes,
    public_key: bytes,
    position: Position,
    neighbor_ids: Sequence[bytes],
    signature: bytes,
) -> bytes:
    """Canonical bytes for a full claim: the signed core plus the signature."""
    return encode_claim_core(node_id, public_key, position, neighbor_ids) + _encode_bytes(
        signature
    )


def encode_block_header(index: int, prev_hash: bytes, nonce: int, claim_bytes: bytes) -> bytes:
    """Canonical block-hash preimage: index, previous hash, nonce, claim."""
    return (
        struct.pack(">Q", index)
        + _encode_bytes(prev_hash)
        + struct.pack(">Q", nonce)
        + _encode_bytes(claim_bytes)
    )


class _Reader:
    """Cursor over a canonical byte stream with bounds checking."""

    def __init__(self, data: bytes, offset: int = 0):
        self.data = data
        self.offset = offset

    def take(self, n: int) -> bytes:
        if self.offset + n > len(self.data):
            raise DecodeError("truncated canonical stream")
        chunk = self.data[self.offset : self.offset + n]
        self.offset += n
        return chunk

    def u32(self) -> int:
        return struct.unpack(">I", self.take(4))[0]

    def u64(self) -> int:
        return struct.unpack(">Q", self.take(8))[0]

    def i64(self) -> int:
        return struct.unpack(">q", self.take(8))[0]

    def len_prefixed(self) -> bytes:
        return self.take(self.u32())

    def done(self) -> bool:
        return self.offset == len(self.data)


def decode_claim(data: bytes) -> tuple[bytes, bytes, Position, list[bytes], bytes]:
    """Inverse of encode_claim. Returns (node_id, public_key, position, neighbor_ids, signature)."""
    reader = _Reader(data)
    fields = _read_claim(reader)
    if not reader.done():
        raise DecodeError("trailing bytes after claim")
    return fields


def _read_claim(reader: _Reader) -> tuple[bytes, bytes, Position, list[bytes], bytes]:
    node_id = reader.len_prefixed()
    public_key = reader.len_prefixed()
    x = millimeters_to_meters(reader.i64())
    y = millimeters_to_meters(reader.i64())
    count = reader.u32()
    neighbor_ids = [reader.len_prefixed() for _ in range(count)]
    signature = reader.len_prefixed()
    return node_id, public_key, Position(x, y), neighbor_ids, signature


def decode_block(data: bytes) -> tuple[int, bytes, int, bytes, bytes]:
    """Decode one exported block: (index, prev_hash, nonce, claim_bytes, stored_hash)."""
    reader = _Reader(data)
    index = reader.u64()
    prev_hash = reader.len_prefixed()
    nonce = reader.u64()
    claim_bytes = reader.len_prefixed()
    stored_hash = reader.len_prefixed()
    if not reader.done():
        raise DecodeError("trailing bytes after block")
    return index, prev_hash, nonce, claim_bytes, stored_hash
