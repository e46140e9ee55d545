"""Topology generation and the secure/insecure localization protocol loop.

A run deploys nodes uniformly in the area, seeds the ledger with anchor
claims, then iterates rounds: every still-unlocalized node gathers localized
references by expanding-ring discovery (RSSI ranging at one hop, DV-Hop
beyond), trilaterates, and submits a signed claim. In SECURE mode miners
verify each claim against the ledger before mining it in; in INSECURE mode
every mined claim is appended unchecked.
"""

from __future__ import annotations

import hashlib
import json
import math
import random
import struct
from collections import deque
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

from blockloc import chain
from blockloc.adversary import Behavior, assign_behaviors, count_selected, falsify_position
from blockloc.chain import Ledger, LocationClaim, make_claim
from blockloc.geometry import (
    DistanceEstimate,
    PathLossParams,
    Position,
    TrilaterationError,
    dvhop_avg_hop_distance,
    dvhop_distance,
    euclidean_distance,
    measure_distance_rssi,
    trilaterate,
)
from blockloc.identity import KeyPair, NodeId, derive_identity, generate_keypair


class Role(Enum):
    ANCHOR = "anchor"
    UNKNOWN = "unknown"


class Mode(Enum):
    SECURE = "secure"
    INSECURE = "insecure"


@dataclass(frozen=True)
class Node:
    node_id: NodeId
    keypair: KeyPair
    true_position: Position
    role: Role
    behavior: Behavior


@dataclass
class Topology:
    """Deployed node set with true positions and symmetric radio adjacency."""

    nodes: list[Node]
    range_r: float
    adjacency: dict[NodeId, tuple[NodeId, ...]]
    area: tuple[float, float]
    _by_id: dict[NodeId, Node] = field(init=False, repr=False)
    _hop_cache: dict[NodeId, dict[NodeId, float]] = field(init=False, repr=False)

    def __post_init__(self):
        self._by_id = {node.node_id: node for node in self.nodes}
        self._hop_cache = {}

    def node(self, node_id: NodeId) -> Node:
        return self._by_id[node_id]

    def true_distance(self, a: NodeId, b: NodeId) -> float:
        return euclidean_distance(self._by_id[a].true_position, self._by_id[b].true_position)


@dataclass(frozen=True)
class SimConfig:
    n_nodes: int = 100
    area: tuple[float, float] = (100.0, 100.0)
    range_r: float = 30.0
    anchor_rate: float = 0.2
    malicious_rate: float = 0.0
    error_factor: float = 1.5
    pathloss: PathLossParams = PathLossParams()
    difficulty: int = 12
    slack: float = 1.0
    min_verifiable_neighbors: int = 4
    max_hopcount: int = 5
    max_rounds: int = 10
    seed: int = 1
    mode: Mode = Mode.SECURE

    def validate(self) -> None:
        if self.n_nodes < 4:
            raise ValueError(f"need at least 4 nodes, got {self.n_nodes}")
        if self.area[0] <= 0 or self.area[1] <= 0:
            raise ValueError(f"area dimensions must be positive, got {self.area}")
        if self.range_r <= 0:
            raise ValueError(f"communication range must be positive, got {self.range_r}")
        for name, rate in (("anchor_rate", self.anchor_rate), ("malicious_rate", self.malicious_rate)):
            if not 0.0 <= rate <= 1.0:
                raise ValueError(f"{name} must be in [0, 1], got {rate}")
        if self.malicious_rate > 0 and (self.error_factor <= 0 or self.error_factor == 1.0):
            raise ValueError(f"error factor must be positive and != 1, got {self.error_factor}")
        if not 0 <= self.difficulty <= 256:
            raise ValueError(f"difficulty must be in [0, 256] bits, got {self.difficulty}")
        if not (self.slack >= 1.0):
            raise ValueError(f"vicinity slack must be >= 1, got {self.slack}")
        if self.min_verifiable_neighbors < 0:
            raise ValueError("min_verifiable_neighbors must be >= 0")
        if self.max_hopcount < 1 or self.max_rounds < 1:
            raise ValueError("max_hopcount and max_rounds must be >= 1")


@dataclass
class RunResult:
    """Per-run localization outcome over honest unknown nodes."""

    per_node_error: dict[NodeId, float]
    mean_error: float
    localized_count: int
    unlocalized_count: int
    rejected_claims: int
    rounds_used: int

    def to_json(self) -> str:
        """Stable serialization; equal runs produce byte-identical strings."""
        payload = {
            "per_node_error": {nid.hex(): err for nid, err in sorted(self.per_node_error.items())},
            "mean_error": self.mean_error,
            "localized_count": self.localized_count,
            "unlocalized_count": self.unlocalized_count,
            "rejected_claims": self.rejected_claims,
            "rounds_used": self.rounds_used,
        }
        return json.dumps(payload, sort_keys=True)


def deploy(config: SimConfig, rng: random.Random) -> Topology:
    """Random uniform deployment with seeded roles, behaviors, and key pairs.

    ceil(anchor_rate * n) nodes become anchors and ceil(malicious_rate * n)
    turn malicious, both drawn uniformly and independently of each other.
    """
    n = config.n_nodes
    width, height = config.area
    positions = [Position(rng.uniform(0.0, width), rng.uniform(0.0, height)) for _ in range(n)]
    keypairs = [generate_keypair(rng) for _ in range(n)]
    anchor_indices = set(rng.sample(range(n), count_selected(n, config.anchor_rate)))
    behaviors = assign_behaviors(n, config.malicious_rate, rng)

    nodes = [
        Node(
            node_id=derive_identity(keypairs[i].public_key),
            keypair=keypairs[i],
            true_position=positions[i],
            role=Role.ANCHOR if i in anchor_indices else Role.UNKNOWN,
            behavior=behaviors[i],
        )
        for i in range(n)
    ]

    neighbor_lists: dict[NodeId, list[NodeId]] = {node.node_id: [] for node in nodes}
    for i in range(n):
        for j in range(i + 1, n):
            if euclidean_distance(positions[i], positions[j]) <= config.range_r:
                neighbor_lists[nodes[i].node_id].append(nodes[j].node_id)
                neighbor_lists[nodes[j].node_id].append(nodes[i].node_id)
    adjacency = {nid: tuple(sorted(nbrs)) for nid, nbrs in neighbor_lists.items()}

    return Topology(nodes=nodes, range_r=config.range_r, adjacency=adjacency, area=config.area)


def hop_counts(topology: Topology, source: NodeId) -> dict[NodeId, float]:
    """BFS hop distance from source to every node; unreachable nodes map to inf."""
    cached = topology._hop_cache.get(source)
    if cached is not None:
        return cached
    hops: dict[NodeId, float] = {node.node_id: math.inf for node in topology.nodes}
    hops[source] = 0
    queue = deque([source])
    while queue:
        current = queue.popleft()
        next_hops = hops[current] + 1
        for neighbor in topology.adjacency[current]:
            if math.isinf(hops[neighbor]):
                hops[neighbor] = next_hops
                queue.append(neighbor)
    topology._hop_cache[source] = hops
    return hops


@dataclass
class RadioEnvironment:
    """Per-run radio context: path-loss model, DV-Hop hop distance, pair noise.

    RSSI shadowing noise is derived from (run seed, measurer id, reference id)
    so repeated measurements of the same pair within a run are identical and
    independent of the order in which nodes are processed.
    """

    pathloss: PathLossParams
    avg_hop_distance: Optional[float]
    noise_seed: bytes
    _measured: dict[tuple[NodeId, NodeId], DistanceEstimate] = field(
        default_factory=dict, init=False, repr=False
    )

    def measure_rssi(self, true_d: float, measurer: NodeId, reference: NodeId) -> DistanceEstimate:
        key = (measurer, reference)
        estimate = self._measured.get(key)
        if estimate is None:
            pair_seed = hashlib.sha256(self.noise_seed + measurer + reference).digest()
            rng = random.Random(int.from_bytes(pair_seed[:8], "big"))
            estimate = measure_distance_rssi(true_d, self.pathloss, rng)
            self._measured[key] = estimate
        return estimate


def discover_references(
    node_id: NodeId,
    hopcount: int,
    topology: Topology,
    position_index: dict[NodeId, Position],
    radio: RadioEnvironment,
) -> list[tuple[NodeId, DistanceEstimate]]:
    """Localized nodes within hopcount hops, with ranged distance estimates.

    Direct neighbors are ranged by RSSI from the true inter-node distance;
    farther references use DV-Hop (skipped when no hop distance is known).
    Responders are identified by id only; positions come from the ledger.
    """
    if hopcount < 1:
        raise ValueError(f"hopcount must be >= 1, got {hopcount}")
    hops_from = hop_counts(topology, node_id)
    references: list[tuple[NodeId, DistanceEstimate]] = []
    for ref_id in sorted(position_index):
        if ref_id == node_id:
            continue
        hops = hops_from.get(ref_id, math.inf)
        if hops > hopcount:
            continue
        if hops == 1:
            estimate = radio.measure_rssi(topology.true_distance(node_id, ref_id), node_id, ref_id)
        else:
            if radio.avg_hop_distance is None:
                continue
            estimate = dvhop_distance(radio.avg_hop_distance, int(hops))
        references.append((ref_id, estimate))
    return references


def localize_node(
    node_id: NodeId,
    topology: Topology,
    position_index: dict[NodeId, Position],
    config: SimConfig,
    radio: RadioEnvironment,
) -> Optional[Position]:
    """Expanding-ring localization: grow hopcount until >= 3 references trilaterate.

    Returns None when max_hopcount is exhausted without a solvable reference
    set (too few references, or degenerate geometry at every ring).
    """
    for hopcount in range(1, config.max_hopcount + 1):
        references = discover_references(node_id, hopcount, topology, position_index, radio)
        if len(references) < 3:
            continue
        pairs = [(position_index[rid], est.meters) for rid, est in references]
        try:
            return trilaterate(pairs)
        except TrilaterationError:
            continue  # collinear references; widen the ring for more
    return None


def _claimed_position(node: Node, estimate: Position, error_factor: float) -> Position:
    if node.behavior is Behavior.MALICIOUS:
        return falsify_position(node.true_position, error_factor)
    return estimate


def _anchor_claims(topology: Topology, error_factor: float) -> list[LocationClaim]:
    claims = []
    for node in topology.nodes:
        if node.role is not Role.ANCHOR:
            continue
        claimed = _claimed_position(node, node.true_position, error_factor)
        claims.append(make_claim(node.keypair, claimed, topology.adjacency[node.node_id]))
    return claims


def _anchor_hop_distance(topology: Topology, ledger: Ledger) -> Optional[float]:
    """Classic DV-Hop phase one: mean meters-per-hop across accepted anchors.

    Uses ledger (claimed) positions but true-topology hop counts, since
    messages travel the physical network while positions come off the chain.
    """
    anchor_ids = sorted(
        node.node_id
        for node in topology.nodes
        if node.role is Role.ANCHOR and node.node_id in ledger.position_index
    )
    if len(anchor_ids) < 2:
        return None
    positions = [ledger.position_index[nid] for nid in anchor_ids]
    pairwise: dict[tuple[int, int], float] = {}
    for i, nid in enumerate(anchor_ids):
        hops_from = hop_counts(topology, nid)
        for j in range(i + 1, len(anchor_ids)):
            pairwise[(i, j)] = hops_from[anchor_ids[j]]
    try:
        return dvhop_avg_hop_distance(positions, pairwise)
    except ValueError:
        return None


def run_localization(config: SimConfig) -> RunResult:
    """Execute one full secure or insecure localization run."""
    config.validate()
    rng = random.Random(config.seed)
    topology = deploy(config, rng)

    # INSECURE skips claim verification everywhere; infinite slack makes the
    # vicinity rule vacuous so both modes share one code path.
    effective_slack = config.slack if config.mode is Mode.SECURE else math.inf

    ledger, rejected_claims = chain.build_genesis(
        _anchor_claims(topology, config.error_factor), config.range_r, effective_slack
    )

    noise_seed = hashlib.sha256(b"blockloc-rssi" + struct.pack(">Q", config.seed % 2**64)).digest()
    radio = RadioEnvironment(
        pathloss=config.pathloss,
        avg_hop_distance=_anchor_hop_distance(topology, ledger),
        noise_seed=noise_seed,
    )

    pending = sorted(
        node.node_id for node in topology.nodes if node.role is Role.UNKNOWN
    )
    rounds_used = 0
    for _ in range(config.max_rounds):
        if not pending:
            break
        rounds_used += 1
        snapshot = ledger.snapshot_index()
        progress = False
        for node_id in list(pending):
            estimate = localize_node(node_id, topology, snapshot, config, radio)
            if estimate is None:
                continue
            node = topology.node(node_id)
            claim = make_claim(
                node.keypair,
                _claimed_position(node, estimate, config.error_factor),
                topology.adjacency[node_id],
            )
            if config.mode is Mode.SECURE:
                outcome = chain.verify_position_claim(
                    claim,
                    ledger,
                    config.range_r,
                    effective_slack,
                    min_verifiable_neighbors=config.min_verifiable_neighbors,
                )
                if not outcome.accepted:
                    rejected_claims += 1
                    continue
            block = chain.mine_block(
                claim, ledger.blocks[-1] if ledger.blocks else None, config.difficulty
            )
            chain.append_block(ledger, block, config.difficulty)
            pending.remove(node_id)
            progress = True
        if not progress:
            break

    honest_unknown = [
        node
        for node in sorted(topology.nodes, key=lambda n: n.node_id)
        if node.role is Role.UNKNOWN and node.behavior is Behavior.HONEST
    ]
    per_node_error: dict[NodeId, float] = {}
    for node in honest_unknown:
        accepted = ledger.position_index.get(node.node_id)
        if accepted is not None:
            per_node_error[node.node_id] = euclidean_distance(accepted, node.true_position)

    mean_error = sum(per_node_error.values()) / len(per_node_error) if per_node_error else 0.0
    return RunResult(
        per_node_error=per_node_error,
        mean_error=mean_error,
        localized_count=len(per_node_error),
        unlocalized_count=len(honest_unknown) - len(per_node_error),
        rejected_claims=rejected_claims,
        rounds_used=rounds_used,
    )
