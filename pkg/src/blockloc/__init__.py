"""Blockchain-secured cooperative localization for IoT node networks.

Nodes estimate ranges via an RSSI path-loss model (one hop) or DV-Hop
(multi hop), trilaterate against references whose positions come from a
proof-of-work ledger of signed location claims, and miners reject claims
whose listed neighbors are not in radio vicinity of the claimed position.
"""

from blockloc.geometry import (
    DistanceEstimate,
    PathLossParams,
    Position,
    RangingMethod,
    distance_from_rss,
    dvhop_avg_hop_distance,
    dvhop_distance,
    euclidean_distance,
    measure_distance_rssi,
    rss_at_distance,
    trilaterate,
)
from blockloc.identity import KeyPair, derive_identity, generate_keypair, sign, verify
from blockloc.chain import (
    Block,
    Ledger,
    LocationClaim,
    RejectReason,
    VerificationOutcome,
    append_block,
    build_genesis,
    lookup_position,
    mine_block,
    validate_block,
    verify_position_claim,
)
from blockloc.adversary import AttackSpec, assign_behaviors, falsify_position
from blockloc.netsim import (
    Behavior,
    Mode,
    Role,
    RunResult,
    SimConfig,
    Topology,
    deploy,
    hop_counts,
    run_localization,
)
from blockloc.experiment import CellResult, ExperimentPlan, run_experiment
from blockloc.reporting import emit_csv, emit_plot_data, render_figure

__version__ = "0.1.0"
