"""Per-cycle CoP and foot objectives for quasi-static walking.

A cycle is a short sequence of posture transitions. With the floating base
on the right foot: shift the CoP over the right foot, lift the left foot,
step it forward while the CoP advances half a step, bring the CoP back
between the feet, then hand the base to the left foot and shift the CoP
over it. The second half of a stride is never planned: solved joint
trajectories are mirrored left/right instead.

The lift can be skipped (under-powered robots overheat in single support);
the lift and step objectives then merge into one dragging step whose CoP
target sits closer to the double-support center.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from typing import Sequence

import numpy as np

from .cost import CostWeights
from .errors import InfeasibleObjectiveError
from .geometry import FootPose, FrameId, rot_z
from .joints import (JointVector, PITCH_JOINTS, ROLL_JOINTS,
                     mirror_joint_name, mirror_joint_vector)
from .sensing import DEFAULT_HALF_LENGTH, DEFAULT_HALF_WIDTH, convex_hull, polygon_margin


class Support(Enum):
    DOUBLE = "double"
    SINGLE_LEFT = "single_left"
    SINGLE_RIGHT = "single_right"

    def mirrored(self) -> "Support":
        if self is Support.SINGLE_LEFT:
            return Support.SINGLE_RIGHT
        if self is Support.SINGLE_RIGHT:
            return Support.SINGLE_LEFT
        return self


@dataclass(frozen=True)
class GaitParams:
    """Step geometry: step length s, half stance width w (feet sit 2w
    apart), lift height h. The CoP advances s/2 per step."""

    step_length: float = 40.0
    half_stance: float = 50.0
    lift_height: float = 10.0

    def __post_init__(self):
        if self.step_length <= 0.0:
            raise ValueError(f"degenerate step length {self.step_length}")
        if self.half_stance <= 0.0:
            raise ValueError(f"half stance width must be positive, got {self.half_stance}")
        if self.lift_height < 0.0:
            raise ValueError(f"lift height must be >= 0, got {self.lift_height}")

    @property
    def cop_forward(self) -> float:
        return 0.5 * self.step_length

    @property
    def stance_width(self) -> float:
        return 2.0 * self.half_stance

    def to_json(self) -> dict:
        return {"step_length": self.step_length, "half_stance": self.half_stance,
                "lift_height": self.lift_height}

    @classmethod
    def from_json(cls, data: dict) -> "GaitParams":
        return cls(float(data["step_length"]), float(data["half_stance"]),
                   float(data["lift_height"]))


def _foot_pose_json(pose: FootPose) -> dict:
    return {"xyz_mm": [float(v) for v in pose.position],
            "rpy_rad": [float(v) for v in pose.orientation.as_array()]}


def _foot_pose_from_json(data: dict) -> FootPose:
    from .geometry import EulerZYX
    return FootPose(np.asarray(data["xyz_mm"], dtype=float), EulerZYX(*data["rpy_rad"]))


@dataclass(frozen=True, eq=False)
class TransitionObjective:
    """One row of the cycle: desired CoP, desired foot poses, the joints
    allowed to move and the support/base bookkeeping."""

    index: int
    label: str
    cop_desired: np.ndarray
    left_desired: FootPose
    right_desired: FootPose
    active_joints: tuple[str, ...]
    support: Support
    base_side: FrameId
    weights: CostWeights | None = None

    def __post_init__(self):
        c = np.array(self.cop_desired, dtype=float).reshape(2)
        c.flags.writeable = False
        object.__setattr__(self, "cop_desired", c)
        object.__setattr__(self, "active_joints", tuple(self.active_joints))
        if self.base_side not in (FrameId.LEFT_FOOT, FrameId.RIGHT_FOOT):
            raise ValueError("base_side must be a foot frame")

    def to_json(self) -> dict:
        data = {
            "index": self.index,
            "label": self.label,
            "cop_desired": [float(v) for v in self.cop_desired],
            "left_desired": _foot_pose_json(self.left_desired),
            "right_desired": _foot_pose_json(self.right_desired),
            "active_joints": list(self.active_joints),
            "support": self.support.value,
            "base_side": self.base_side.value,
        }
        if self.weights is not None:
            data["weights"] = self.weights.to_json()
        return data

    @classmethod
    def from_json(cls, data: dict) -> "TransitionObjective":
        weights = CostWeights.from_json(data["weights"]) if "weights" in data else None
        return cls(int(data["index"]), data["label"],
                   np.asarray(data["cop_desired"], dtype=float),
                   _foot_pose_from_json(data["left_desired"]),
                   _foot_pose_from_json(data["right_desired"]),
                   tuple(data["active_joints"]),
                   Support(data["support"]), FrameId(data["base_side"]),
                   weights)

    def with_weights(self, weights: CostWeights | None) -> "TransitionObjective":
        return TransitionObjective(self.index, self.label, self.cop_desired,
                                   self.left_desired, self.right_desired,
                                   self.active_joints, self.support, self.base_side,
                                   weights)


@dataclass(frozen=True)
class GaitCycle:
    transitions: tuple[TransitionObjective, ...]
    skip_lift: bool
    params: GaitParams

    def __post_init__(self):
        object.__setattr__(self, "transitions", tuple(self.transitions))

    def to_json(self) -> dict:
        return {"skip_lift": self.skip_lift, "params": self.params.to_json(),
                "transitions": [t.to_json() for t in self.transitions]}

    @classmethod
    def from_json(cls, data: dict) -> "GaitCycle":
        return cls(tuple(TransitionObjective.from_json(t) for t in data["transitions"]),
                   bool(data["skip_lift"]), GaitParams.from_json(data["params"]))

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_json(), fh, indent=2, sort_keys=True)

    @classmethod
    def load(cls, path) -> "GaitCycle":
        with open(path) as fh:
            return cls.from_json(json.load(fh))


def _shoe_corners(center_xy: np.ndarray, yaw: float, half_extents: tuple[float, float]) -> np.ndarray:
    a, b = half_extents
    local = np.array([[a, b], [a, -b], [-a, -b], [-a, b]])
    return local @ rot_z(yaw)[:2, :2].T + np.asarray(center_xy, dtype=float)


def support_polygon_for(objective: TransitionObjective,
                        half_extents: tuple[float, float] = (DEFAULT_HALF_LENGTH,
                                                             DEFAULT_HALF_WIDTH)) -> np.ndarray:
    """Support polygon implied by an objective's desired poses and mode."""
    left = _shoe_corners(objective.left_desired.position[:2],
                         objective.left_desired.orientation.gamma, half_extents)
    right = _shoe_corners(objective.right_desired.position[:2],
                          objective.right_desired.orientation.gamma, half_extents)
    if objective.support is Support.SINGLE_LEFT:
        return convex_hull(left)
    if objective.support is Support.SINGLE_RIGHT:
        return convex_hull(right)
    return convex_hull(np.vstack([left, right]))


def _check_feasible(objective: TransitionObjective,
                    half_extents: tuple[float, float]) -> TransitionObjective:
    margin = polygon_margin(support_polygon_for(objective, half_extents), objective.cop_desired)
    if margin < 0.0:
        raise InfeasibleObjectiveError(
            f"transition {objective.index} ({objective.label}): CoP target "
            f"{objective.cop_desired.tolist()} lies {-margin:.1f} mm outside its support polygon")
    return objective


def build_cycle(params: GaitParams,
                skip_lift: bool = False,
                cop_centering: float | None = None,
                shoe_half_extents: tuple[float, float] = (DEFAULT_HALF_LENGTH,
                                                          DEFAULT_HALF_WIDTH)) -> GaitCycle:
    """Emit the transition objectives for one planned half-stride.

    All quantities up to the base handover are in the floating base on the
    right foot; the final transition is expressed in the new base on the
    left foot. Desired foot orientations are always zero. `cop_centering`
    only matters with `skip_lift`: it is the lateral offset (mm, toward the
    left foot) applied to the merged step's CoP target, defaulting to the
    double-support midline at half the stance width.
    """
    s = params.step_length
    s2 = params.cop_forward
    w = params.half_stance
    big_w = params.stance_width
    h = params.lift_height

    zero = FootPose.zero()
    left_home = FootPose.from_xyz(0.0, big_w, 0.0)
    left_lift = FootPose.from_xyz(0.0, big_w, h)
    left_fwd = FootPose.from_xyz(s, big_w, 0.0)

    def obj(index, label, cop, left, right, active, support, base=FrameId.RIGHT_FOOT):
        return _check_feasible(
            TransitionObjective(index, label, np.asarray(cop, dtype=float), left, right,
                                tuple(active), support, base),
            shoe_half_extents)

    rows: list[TransitionObjective] = []
    rows.append(obj(1, "a->b", (0.0, 0.0), left_home, zero, ROLL_JOINTS, Support.DOUBLE))
    if skip_lift:
        centering = w if cop_centering is None else float(cop_centering)
        # A dragging step needs the pitch joints for the step itself plus
        # the roll joints whenever the CoP target moves off the support
        # foot's midline.
        active = PITCH_JOINTS if centering == 0.0 else PITCH_JOINTS + ROLL_JOINTS
        rows.append(obj(2, "b->d", (s2, centering), left_fwd, zero, active, Support.DOUBLE))
        next_index = 3
    else:
        rows.append(obj(2, "b->c", (0.0, 0.0), left_lift, zero, PITCH_JOINTS,
                        Support.SINGLE_RIGHT))
        rows.append(obj(3, "c->d", (s2, 0.0), left_fwd, zero, PITCH_JOINTS,
                        Support.SINGLE_RIGHT))
        next_index = 4
    rows.append(obj(next_index, "d->e", (s2, w), left_fwd, zero, ROLL_JOINTS, Support.DOUBLE))
    # Base handover: everything below is in the new floating base attached
    # to the left foot, so the right foot sits one step behind and one
    # stance width to the right.
    rows.append(obj(next_index + 1, "e->f", (-s2, 0.0), zero,
                    FootPose.from_xyz(-s, -big_w, 0.0), ROLL_JOINTS, Support.DOUBLE,
                    base=FrameId.LEFT_FOOT))
    return GaitCycle(tuple(rows), skip_lift, params)


def mirror_transition(objective: TransitionObjective) -> TransitionObjective:
    """Left/right reflection of an objective.

    Foot targets swap sides, every y-component changes sign, joint ids swap
    L and R, and the support mode and base side flip.
    """
    cop = objective.cop_desired.copy()
    cop[1] = -cop[1]
    active = tuple(mirror_joint_name(n) for n in objective.active_joints)
    return TransitionObjective(
        objective.index,
        objective.label + "~mirror",
        cop,
        objective.right_desired.mirrored(),
        objective.left_desired.mirrored(),
        active,
        objective.support.mirrored(),
        objective.base_side.mirrored(),
        objective.weights,
    )


def mirror_joint_trajectory(trajectory: Sequence[JointVector]) -> list[JointVector]:
    """Mirror a stored joint trajectory frame by frame."""
    return [mirror_joint_vector(q) for q in trajectory]
