"""Proof-of-work ledger of signed location claims.

Each block carries one claim: a node's identity, public key, claimed
position, and neighbor list. Miners accept a claim only if its signature
verifies, its identity matches the public key, and every listed neighbor
with a known ledger position lies within communication range of the claimed
position (the vicinity rule). Accepted claims are mined into hash-linked
blocks, so tampering with any byte of any block is detectable downstream.
"""

from __future__ import annotations

import hashlib
import math
import struct
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Optional, Sequence

from blockloc import identity
from blockloc.geometry import Position, euclidean_distance
from blockloc.identity import DIGEST_SIZE, ZERO_DIGEST, DecodeError, NodeId


class RejectReason(Enum):
    OK = "ok"
    BAD_SIGNATURE = "bad_signature"
    IDENTITY_MISMATCH = "identity_mismatch"
    VICINITY_VIOLATION = "vicinity_violation"
    NO_VERIFIABLE_NEIGHBOR = "no_verifiable_neighbor"
    BAD_NONCE = "bad_nonce"
    BAD_LINK = "bad_link"


@dataclass(frozen=True)
class VerificationOutcome:
    reason: RejectReason

    @property
    def accepted(self) -> bool:
        return self.reason is RejectReason.OK


_OK = VerificationOutcome(RejectReason.OK)


@dataclass(frozen=True)
class LocationClaim:
    """A node's signed assertion of identity, position, and neighbor list."""

    node_id: NodeId
    public_key: bytes
    position: Position
    neighbor_ids: tuple[NodeId, ...]
    signature: bytes

    def core_bytes(self) -> bytes:
        return identity.encode_claim_core(
            self.node_id, self.public_key, self.position, self.neighbor_ids
        )

    def encode(self) -> bytes:
        return identity.encode_claim(
            self.node_id, self.public_key, self.position, self.neighbor_ids, self.signature
        )


def make_claim(
    keypair: identity.KeyPair,
    position: Position,
    neighbor_ids: Iterable[NodeId],
) -> LocationClaim:
    """Build and sign a claim from a node's key pair.

    The neighbor list is deduplicated, sorted, and stripped of the node's
    own id before signing.
    """
    node_id = identity.derive_identity(keypair.public_key)
    neighbors = tuple(sorted(set(neighbor_ids) - {node_id}))
    core = identity.encode_claim_core(node_id, keypair.public_key, position, neighbors)
    return LocationClaim(
        node_id=node_id,
        public_key=keypair.public_key,
        position=position,
        neighbor_ids=neighbors,
        signature=identity.sign(core, keypair),
    )


@dataclass(frozen=True)
class Block:
    index: int
    prev_hash: bytes
    nonce: int
    claim: LocationClaim
    hash: bytes

    def header_bytes(self) -> bytes:
        return identity.encode_block_header(
            self.index, self.prev_hash, self.nonce, self.claim.encode()
        )

    def encode(self) -> bytes:
        """Canonical export encoding: hash preimage plus the stored hash."""
        return self.header_bytes() + struct.pack(">I", len(self.hash)) + self.hash


@dataclass
class Ledger:
    """Block list plus derived per-node indexes over the latest accepted claim."""

    blocks: list[Block] = field(default_factory=list)
    position_index: dict[NodeId, Position] = field(default_factory=dict)
    claim_index: dict[NodeId, LocationClaim] = field(default_factory=dict)

    def tip_hash(self) -> bytes:
        return self.blocks[-1].hash if self.blocks else ZERO_DIGEST

    def next_index(self) -> int:
        return len(self.blocks)

    def snapshot_index(self) -> dict[NodeId, Position]:
        """Copy of the position index, for round-consistent reads."""
        return dict(self.position_index)


def lookup_position(ledger: Ledger, node_id: NodeId) -> Optional[Position]:
    """Latest accepted position for node_id, or None if never accepted."""
    return ledger.position_index.get(node_id)


def _leading_zero_bits_ok(digest: bytes, difficulty: int) -> bool:
    if difficulty <= 0:
        return True
    return int.from_bytes(digest, "big") >> (8 * DIGEST_SIZE - difficulty) == 0


def verify_position_claim(
    claim: LocationClaim,
    ledger: Ledger,
    range_r: float,
    slack: float = 1.0,
    *,
    position_index: Optional[dict[NodeId, Position]] = None,
    min_verifiable_neighbors: int = 1,
    require_reciprocal: bool = False,
) -> VerificationOutcome:
    """Miner-side claim verification: signature, identity binding, vicinity.

    Every listed neighbor with a known ledger position must lie within
    slack * range_r of the claimed position. Unless the ledger is still
    empty, at least min_verifiable_neighbors listed neighbors must have
    known positions, so a claim cannot pass on a vacuous or near-vacuous
    check; pass 0 for the genesis bootstrap. slack = inf disables the
    vicinity rule entirely, including the verifiable-neighbor minimum that
    exists to support it.

    With require_reciprocal, a listed neighbor only counts as verifiable if
    its own accepted claim lists the claimant back; this strict mode blunts
    fabricated neighbor lists, which truthful symmetric adjacency never
    needs. position_index overrides the index the vicinity rule reads,
    letting a replay verify claims against the ledger state at insertion.
    """
    if not identity.verify(claim.core_bytes(), claim.signature, claim.public_key):
        return VerificationOutcome(RejectReason.BAD_SIGNATURE)
    if claim.node_id != identity.derive_identity(claim.public_key):
        return VerificationOutcome(RejectReason.IDENTITY_MISMATCH)

    if math.isinf(slack):
        return _OK

    index = ledger.position_index if position_index is None else position_index
    limit = slack * range_r
    verifiable = 0
    for neighbor_id in claim.neighbor_ids:
        neighbor_pos = index.get(neighbor_id)
        if neighbor_pos is None:
            continue
        if require_reciprocal:
            neighbor_claim = ledger.claim_index.get(neighbor_id)
            if neighbor_claim is None or claim.node_id not in neighbor_claim.neighbor_ids:
                continue
        verifiable += 1
        if euclidean_distance(claim.position, neighbor_pos) > limit:
            return VerificationOutcome(RejectReason.VICINITY_VIOLATION)
    if verifiable < min_verifiable_neighbors and index:
        return VerificationOutcome(RejectReason.NO_VERIFIABLE_NEIGHBOR)
    return _OK


def mine_block(claim: LocationClaim, prev: Optional[Block], difficulty: int) -> Block:
    """Mine a block for the claim on top of prev (None mines on genesis).

    Searches nonces ascending from 0 and returns the block with the smallest
    nonce whose hash has at least `difficulty` leading zero bits, so mining
    is deterministic.
    """
    index = 0 if prev is None else prev.index + 1
    prev_hash = ZERO_DIGEST if prev is None else prev.hash
    claim_bytes = claim.encode()
    prefix = struct.pack(">Q", index) + struct.pack(">I", len(prev_hash)) + prev_hash
    suffix = struct.pack(">I", len(claim_bytes)) + claim_bytes

    for nonce in range(2**64):
        digest = hashlib.sha256(prefix + struct.pack(">Q", nonce) + suffix).digest()
        if _leading_zero_bits_ok(digest, difficulty):
            return Block(index=index, prev_hash=prev_hash, nonce=nonce, claim=claim, hash=digest)
    raise RuntimeError("nonce space exhausted")  # unreachable at desk difficulties


def check_block_structure(block: Block, prev_hash: bytes, index: int, difficulty: int) -> RejectReason:
    """Structural checks only: linkage, hash recomputation, proof-of-work."""
    if block.index != index or block.prev_hash != prev_hash:
        return RejectReason.BAD_LINK
    digest = hashlib.sha256(block.header_bytes()).digest()
    if digest != block.hash or not _leading_zero_bits_ok(digest, difficulty):
        return RejectReason.BAD_NONCE
    return RejectReason.OK


def validate_block(
    block: Block,
    ledger: Ledger,
    difficulty: int,
    range_r: float,
    slack: float = 1.0,
    *,
    position_index: Optional[dict[NodeId, Position]] = None,
    min_verifiable_neighbors: int = 1,
) -> VerificationOutcome:
    """Full validation of a candidate block against the current ledger tip.

    Checks linkage first, then hash correctness and proof of work, then the
    claim itself (signature, identity, vicinity).
    """
    structural = check_block_structure(block, ledger.tip_hash(), ledger.next_index(), difficulty)
    if structural is not RejectReason.OK:
        return VerificationOutcome(structural)
    return verify_position_claim(
        block.claim,
        ledger,
        range_r,
        slack,
        position_index=position_index,
        min_verifiable_neighbors=min_verifiable_neighbors,
    )


def append_block(ledger: Ledger, block: Block, difficulty: int = 0) -> Ledger:
    """Append a structurally valid block and update the position index.

    Claim-level acceptance (the vicinity rule) is the caller's gate: the
    secure protocol verifies claims before mining, the insecure variant
    appends every mined claim. Structural integrity is always enforced.
    """
    structural = check_block_structure(block, ledger.tip_hash(), ledger.next_index(), difficulty)
    if structural is not RejectReason.OK:
        raise ValueError(f"block failed validation: {structural.value}")
    ledger.blocks.append(block)
    ledger.position_index[block.claim.node_id] = block.claim.position
    ledger.claim_index[block.claim.node_id] = block.claim
    return ledger


def build_genesis(
    anchor_claims: Sequence[LocationClaim], range_r: float, slack: float = 1.0
) -> tuple[Ledger, int]:
    """Build the initial ledger from anchor claims, mined at difficulty 0.

    Claims are processed in ascending node-id order, each vicinity-verified
    against the anchors accepted before it. A claim with no previously
    accepted listed neighbor is accepted (bootstrap exception); rejected
    anchors are excluded. Returns the ledger and the number of rejections.
    """
    ledger = Ledger()
    rejected = 0
    for claim in sorted(anchor_claims, key=lambda c: c.node_id):
        outcome = verify_position_claim(
            claim, ledger, range_r, slack, min_verifiable_neighbors=0
        )
        if not outcome.accepted:
            rejected += 1
            continue
        block = mine_block(claim, ledger.blocks[-1] if ledger.blocks else None, difficulty=0)
        append_block(ledger, block, difficulty=0)
    return ledger, rejected


def validate_chain(
    ledger: Ledger,
    difficulty: int,
    *,
    genesis_count: int = 0,
    range_r: float = 0.0,
    slack: float = 1.0,
    check_claims: bool = False,
    min_verifiable_neighbors: int = 1,
) -> tuple[bool, int, RejectReason]:
    """Validate the whole chain from genesis.

    The first genesis_count blocks are held to difficulty 0 (pre-trusted
    anchor blocks), the rest to `difficulty`. With check_claims, claim
    signatures and vicinity are replayed against the index as it stood when
    each block was inserted. Returns (ok, first_bad_index, reason); the
    index is len(blocks) when the chain is valid.
    """
    prev_hash = ZERO_DIGEST
    replay_index: dict[NodeId, Position] = {}
    for i, block in enumerate(ledger.blocks):
        block_difficulty = 0 if i < genesis_count else difficulty
        structural = check_block_structure(block, prev_hash, i, block_difficulty)
        if structural is not RejectReason.OK:
            return False, i, structural
        if check_claims:
            outcome = verify_position_claim(
                block.claim,
                ledger,
                range_r,
                slack,
                position_index=replay_index,
                min_verifiable_neighbors=0 if i < genesis_count else min_verifiable_neighbors,
            )
            if not outcome.accepted:
                return False, i, outcome.reason
            replay_index[block.claim.node_id] = block.claim.position
        prev_hash = block.hash
    return True, len(ledger.blocks), RejectReason.OK


def rebuild_position_index(blocks: Sequence[Block]) -> dict[NodeId, Position]:
    """Fold the block list into the node -> latest position map."""
    index: dict[NodeId, Position] = {}
    for block in blocks:
        index[block.claim.node_id] = block.claim.position
    return index


def export_chain(ledger: Ledger) -> bytes:
    """Length-prefixed concatenation of canonical block encodings."""
    out = bytearray()
    for block in ledger.blocks:
        encoded = block.encode()
        out += struct.pack(">I", len(encoded))
        out += encoded
    return bytes(out)


def import_chain(data: bytes) -> Ledger:
    """Inverse of export_chain. Structural linkage/hash errors surface on validation,
    not here; malformed framing raises DecodeError."""
    blocks: list[Block] = []
    offset = 0
    while offset < len(data):
        if offset + 4 > len(data):
            raise DecodeError("truncated block length prefix")
        (length,) = struct.unpack_from(">I", data, offset)
        offset += 4
        if offset + length > len(data):
            raise DecodeError("truncated block encoding")
        index, prev_hash, nonce, claim_bytes, stored_hash = identity.decode_block(
            data[offset : offset + length]
        )
        offset += length
        node_id, public_key, position, neighbor_ids, signature = identity.decode_claim(claim_bytes)
        claim = LocationClaim(
            node_id=node_id,
            public_key=public_key,
            position=position,
            neighbor_ids=tuple(neighbor_ids),
            signature=signature,
        )
        blocks.append(
            Block(index=index, prev_hash=prev_hash, nonce=nonce, claim=claim, hash=stored_hash)
        )
    return Ledger(
        blocks=blocks,
        position_index=rebuild_position_index(blocks),
        claim_index={b.claim.node_id: b.claim for b in blocks},
    )
