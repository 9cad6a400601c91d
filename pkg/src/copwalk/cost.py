"""Weighted transition cost evaluated purely from sensed quantities.

cost = 1/2 * (sum_axis w_c[axis] * (C - C_d)^2
              + sum_{j in {left, right}} sum_comp w_p[comp] * (P[j] - P_d[j])^2)

C is the measured CoP, P[j] the measured foot poses, both relative to the
floating base of the active objective. Nothing else about the robot enters.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import FrameChainError
from .geometry import FootPose, FrameId
from .sensing import CopReading

# 1 degree of foot tilt costs like 1 mm of position error.
DEG_PER_RAD_SQ = (180.0 / np.pi) ** 2


@dataclass(frozen=True, eq=False)
class CostWeights:
    """Per-axis CoP weights (2) and per-component foot-pose weights (6)."""

    cop: np.ndarray
    foot: np.ndarray

    def __post_init__(self):
        c = np.array(self.cop, dtype=float).reshape(2)
        f = np.array(self.foot, dtype=float).reshape(6)
        if (c < 0).any() or (f < 0).any():
            raise ValueError("weights must be non-negative")
        if not (c > 0).any() and not (f > 0).any():
            raise ValueError("at least one weight must be positive")
        c.flags.writeable = False
        f.flags.writeable = False
        object.__setattr__(self, "cop", c)
        object.__setattr__(self, "foot", f)

    @classmethod
    def default(cls) -> "CostWeights":
        return cls(np.ones(2), np.array([1.0, 1.0, 1.0,
                                         DEG_PER_RAD_SQ, DEG_PER_RAD_SQ, DEG_PER_RAD_SQ]))

    def scaled(self, factor: float) -> "CostWeights":
        return CostWeights(self.cop * factor, self.foot * factor)

    def to_json(self) -> dict:
        return {"cop": [float(v) for v in self.cop], "foot": [float(v) for v in self.foot]}

    @classmethod
    def from_json(cls, data: dict) -> "CostWeights":
        return cls(np.asarray(data["cop"], dtype=float), np.asarray(data["foot"], dtype=float))


@dataclass(frozen=True, eq=False)
class Observation:
    """One sensor snapshot: CoP/GRF plus both foot poses, all in the
    floating base identified by `base_side`."""

    cop: CopReading
    left: FootPose
    right: FootPose
    base_side: FrameId


def evaluate_cost(obs: Observation, objective, weights: CostWeights | None = None) -> float:
    """Evaluate the transition cost of an observation against an objective.

    `objective` provides cop_desired, left_desired, right_desired and
    base_side (and optionally its own weights). Explicit `weights` win over
    the objective's; both feet always enter the sum, even the one carrying
    the floating base.
    """
    if obs.base_side is not objective.base_side:
        raise FrameChainError(
            f"observation frame {obs.base_side.value} does not match "
            f"objective frame {objective.base_side.value}")
    if weights is None:
        weights = getattr(objective, "weights", None) or CostWeights.default()
    cop_err = obs.cop.cop - np.asarray(objective.cop_desired, dtype=float)
    total = float(weights.cop @ (cop_err * cop_err))
    for measured, desired in ((obs.left, objective.left_desired),
                              (obs.right, objective.right_desired)):
        err = measured.as_vector() - desired.as_vector()
        total += float(weights.foot @ (err * err))
    return 0.5 * total
