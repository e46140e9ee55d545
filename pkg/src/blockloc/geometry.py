"""Geometric and radio-model math: distances, RSSI path loss, DV-Hop, trilateration."""

from __future__ import annotations

import math
import random
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Mapping, Sequence

# Relative determinant threshold below which the trilateration normal
# equations are treated as rank deficient (near-collinear references).
# At 1e-2 a reference set whose geometry would amplify ranging noise by
# more than ~10x is rejected so the caller can widen its search instead;
# pure float-rank thresholds (1e-9) let such sets through and single bad
# solves then poison every later node that ranges against them.
SINGULARITY_THRESHOLD = 1e-2


class RangingMethod(Enum):
    RSSI = "rssi"
    DVHOP = "dvhop"


@dataclass(frozen=True)
class Position:
    """A 2-D point in meters. Estimates may fall outside the deployment area."""

    x: float
    y: float

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise ValueError(f"position coordinates must be finite, got ({self.x}, {self.y})")


@dataclass(frozen=True)
class PathLossParams:
    """Log-distance path-loss model parameters.

    p_tr: transmit power (dBm); p_loss_d0: loss at the reference distance (dB);
    tau: path-loss exponent; d0: reference distance (m); sigma: shadowing
    standard deviation (dB).
    """

    p_tr: float = 0.0
    p_loss_d0: float = 40.0
    tau: float = 3.0
    d0: float = 1.0
    sigma: float = 2.0

    def __post_init__(self):
        if self.tau <= 0:
            raise ValueError(f"path-loss exponent must be > 0, got {self.tau}")
        if self.d0 <= 0:
            raise ValueError(f"reference distance must be > 0, got {self.d0}")
        if self.sigma < 0:
            raise ValueError(f"shadowing sigma must be >= 0, got {self.sigma}")


@dataclass(frozen=True)
class DistanceEstimate:
    """A ranged distance to a reference node and how it was obtained."""

    meters: float
    method: RangingMethod
    hops: int

    def __post_init__(self):
        if self.meters < 0:
            raise ValueError(f"distance must be >= 0, got {self.meters}")
        if self.hops < 1:
            raise ValueError(f"hop count must be >= 1, got {self.hops}")
        if self.method is RangingMethod.RSSI and self.hops != 1:
            raise ValueError("RSSI ranging is only valid for direct neighbors (hops = 1)")


class TrilaterationError(ValueError):
    """References are too few or geometrically degenerate; gather more references."""


def euclidean_distance(a: Position, b: Position) -> float:
    """Euclidean distance between two points, in meters."""
    return math.hypot(a.x - b.x, a.y - b.y)


def rss_at_distance(d: float, params: PathLossParams, noise: float = 0.0) -> float:
    """Received signal strength (dBm) at distance d under the log-distance model.

    RSS(d) = p_tr - p_loss_d0 - 10 * tau * log10(d / d0) + noise
    """
    if d <= 0:
        raise ValueError(f"distance must be > 0 for the path-loss model, got {d}")
    return params.p_tr - params.p_loss_d0 - 10.0 * params.tau * math.log10(d / params.d0) + noise


def distance_from_rss(rss: float, params: PathLossParams) -> float:
    """Invert the path-loss model: distance (m) implied by a received power (dBm)."""
    return params.d0 * 10.0 ** ((params.p_tr - params.p_loss_d0 - rss) / (10.0 * params.tau))


def measure_distance_rssi(
    true_d: float, params: PathLossParams, rng: random.Random
) -> DistanceEstimate:
    """Simulate a one-hop RSSI ranging of a neighbor at true distance true_d.

    Draws shadowing noise ~ Normal(0, sigma) in dB, forms the received power,
    and inverts the model. With sigma = 0 the estimate equals true_d exactly.
    """
    noise = rng.gauss(0.0, params.sigma) if params.sigma > 0 else 0.0
    rss = rss_at_distance(true_d, params, noise)
    return DistanceEstimate(distance_from_rss(rss, params), RangingMethod.RSSI, hops=1)


def dvhop_avg_hop_distance(
    anchor_positions: Sequence[Position],
    pairwise_hops: Mapping[tuple[int, int], float],
) -> float:
    """Average meters-per-hop over all mutually reachable anchor pairs.

    pairwise_hops maps index pairs (i, j) into anchor_positions to hop counts;
    pairs missing or mapped to infinity are unreachable and skipped. Returns
    sum of pairwise distances / sum of pairwise hop counts.
    """
    total_dist = 0.0
    total_hops = 0
    n = len(anchor_positions)
    for i in range(n):
        for j in range(i + 1, n):
            hops = pairwise_hops.get((i, j), pairwise_hops.get((j, i), math.inf))
            if not math.isfinite(hops):
                continue
            total_dist += euclidean_distance(anchor_positions[i], anchor_positions[j])
            total_hops += int(hops)
    if total_hops == 0:
        raise ValueError("no mutually reachable anchor pair; cannot compute hop distance")
    return total_dist / total_hops


def dvhop_distance(avg_hop_distance: float, hops: int) -> DistanceEstimate:
    """DV-Hop range: average hop distance times the hop count to the reference."""
    if avg_hop_distance <= 0:
        raise ValueError(f"average hop distance must be > 0, got {avg_hop_distance}")
    if hops < 1:
        raise ValueError(f"hop count must be >= 1, got {hops}")
    return DistanceEstimate(avg_hop_distance * hops, RangingMethod.DVHOP, hops=hops)


def trilaterate(references: Iterable[tuple[Position, float]]) -> Position:
    """Solve for a position from >= 3 (reference position, distance) pairs.

    Linearizes by subtracting the circle equation of the reference with the
    smallest distance (tightest circle) from all others and solves the
    resulting 2-D system via normal equations. With exact distances and
    non-degenerate geometry this recovers the true point.

    Raises TrilaterationError on fewer than 3 references or when the
    references are (near-)collinear; the caller should gather more references.
    """
    refs = list(references)
    if len(refs) < 3:
        raise TrilaterationError(f"need at least 3 references, got {len(refs)}")

    pivot = min(range(len(refs)), key=lambda i: refs[i][1])
    (pr, dr) = refs[pivot]

    # Rows of A p = b from (x-xi)^2 + (y-yi)^2 = di^2 minus the pivot equation.
    m00 = m01 = m11 = 0.0  # normal matrix A^T A (symmetric)
    v0 = v1 = 0.0  # A^T b
    for i, (p, d) in enumerate(refs):
        if i == pivot:
            continue
        ax = 2.0 * (pr.x - p.x)
        ay = 2.0 * (pr.y - p.y)
        b = d * d - dr * dr - p.x * p.x - p.y * p.y + pr.x * pr.x + pr.y * pr.y
        m00 += ax * ax
        m01 += ax * ay
        m11 += ay * ay
        v0 += ax * b
        v1 += ay * b

    det = m00 * m11 - m01 * m01
    row_norms = math.hypot(m00, m01) * math.hypot(m01, m11)
    if row_norms == 0.0 or abs(det) < SINGULARITY_THRESHOLD * row_norms:
        raise TrilaterationError("reference geometry is singular (collinear references)")

    x = (m11 * v0 - m01 * v1) / det
    y = (m00 * v1 - m01 * v0) / det
    return Position(x, y)
