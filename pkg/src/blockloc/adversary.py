"""Adversarial behaviors: position forging and malicious-node assignment."""

from __future__ import annotations

import math
import random
from dataclasses import dataclass
from enum import Enum

from blockloc.geometry import Position


class AttackKind(Enum):
    POSITION_FORGE = "position_forge"


class Behavior(Enum):
    HONEST = "honest"
    MALICIOUS = "malicious"


@dataclass(frozen=True)
class AttackSpec:
    kind: AttackKind = AttackKind.POSITION_FORGE
    error_factor: float = 1.5

    def __post_init__(self):
        if self.error_factor <= 0 or self.error_factor == 1.0:
            raise ValueError(f"error factor must be positive and != 1, got {self.error_factor}")


def falsify_position(true_pos: Position, factor: float) -> Position:
    """Forged position report: componentwise scaling of the true position.

    The displacement grows with distance from the origin; a node exactly at
    the origin reports truthfully and is undetectable by the vicinity rule.
    """
    return Position(factor * true_pos.x, factor * true_pos.y)


def count_selected(n_nodes: int, rate: float) -> int:
    """ceil(rate * n), guarded against float noise (0.2 * 100 must give 20)."""
    return max(0, math.ceil(rate * n_nodes - 1e-9))


def assign_behaviors(n_nodes: int, malicious_rate: float, rng: random.Random) -> list[Behavior]:
    """Mark ceil(rate * n) nodes malicious, chosen uniformly without replacement."""
    if not 0.0 <= malicious_rate <= 1.0:
        raise ValueError(f"malicious rate must be in [0, 1], got {malicious_rate}")
    behaviors = [Behavior.HONEST] * n_nodes
    for i in rng.sample(range(n_nodes), count_selected(n_nodes, malicious_rate)):
        behaviors[i] = Behavior.MALICIOUS
    return behaviors
