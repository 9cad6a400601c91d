"""Frames, Euler-angle poses and homogeneous-transform algebra.

One convention everywhere: a rotation is assembled as Rz(gamma) @ Ry(beta)
@ Rx(alpha) (yaw about z, pitch about y, roll about x, in that order).
Translations are millimeters, angles radians. Every transform is labeled
with a source and target frame so that chains like camera tag -> world tag
-> support foot -> floating base cannot be composed out of order.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import FrameChainError, GimbalLockError

ORTHONORMAL_TOL = 1e-9
# |beta| closer than this to pi/2 is refused rather than silently patched.
GIMBAL_GUARD = 1e-6


class FrameId(Enum):
    WORLD = "world"
    LEFT_FOOT = "left_foot"
    RIGHT_FOOT = "right_foot"
    FLOATING_BASE = "floating_base"
    CAMERA = "camera"

    def mirrored(self) -> "FrameId":
        if self is FrameId.LEFT_FOOT:
            return FrameId.RIGHT_FOOT
        if self is FrameId.RIGHT_FOOT:
            return FrameId.LEFT_FOOT
        return self


def normalize_angle(angle: float) -> float:
    """Wrap an angle to (-pi, pi]."""
    wrapped = math.remainder(float(angle), 2.0 * math.pi)
    if wrapped <= -math.pi:
        wrapped += 2.0 * math.pi
    return wrapped


def rot_x(angle: float) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def rot_y(angle: float) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def rot_z(angle: float) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def euler_zyx_matrix(alpha: float, beta: float, gamma: float) -> np.ndarray:
    """Rotation matrix Rz(gamma) @ Ry(beta) @ Rx(alpha)."""
    return rot_z(gamma) @ rot_y(beta) @ rot_x(alpha)


def matrix_to_euler_zyx(rotation: np.ndarray) -> tuple[float, float, float]:
    """Decompose a rotation matrix into (alpha, beta, gamma).

    Raises GimbalLockError when |beta| is within GIMBAL_GUARD of pi/2;
    quasi-static feet never pitch that far, so reaching it signals a bug
    upstream rather than a situation worth a silent fallback.
    """
    r = np.asarray(rotation, dtype=float)
    cos_beta = math.hypot(r[0, 0], r[1, 0])
    beta = math.atan2(-r[2, 0], cos_beta)
    if abs(abs(beta) - 0.5 * math.pi) < GIMBAL_GUARD:
        raise GimbalLockError(f"pitch {beta:.9f} rad too close to +/-pi/2")
    alpha = math.atan2(r[2, 1], r[2, 2])
    gamma = math.atan2(r[1, 0], r[0, 0])
    return alpha, beta, gamma


@dataclass(frozen=True, eq=False)
class EulerZYX:
    """Roll/pitch/yaw triple, normalized to (-pi, pi]."""

    alpha: float = 0.0
    beta: float = 0.0
    gamma: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "alpha", normalize_angle(self.alpha))
        object.__setattr__(self, "beta", normalize_angle(self.beta))
        object.__setattr__(self, "gamma", normalize_angle(self.gamma))

    def matrix(self) -> np.ndarray:
        return euler_zyx_matrix(self.alpha, self.beta, self.gamma)

    @classmethod
    def from_matrix(cls, rotation: np.ndarray) -> "EulerZYX":
        return cls(*matrix_to_euler_zyx(rotation))

    def as_array(self) -> np.ndarray:
        return np.array([self.alpha, self.beta, self.gamma])

    def __repr__(self):
        return f"EulerZYX(alpha={self.alpha:.6g}, beta={self.beta:.6g}, gamma={self.gamma:.6g})"


def _check_rotation(rotation: np.ndarray) -> np.ndarray:
    r = np.array(rotation, dtype=float)
    if r.shape != (3, 3):
        raise ValueError(f"rotation must be 3x3, got {r.shape}")
    err = np.abs(r.T @ r - np.eye(3)).max()
    if err > ORTHONORMAL_TOL * 10.0:
        raise ValueError(f"rotation not orthonormal (|R'R - I| = {err:.3e})")
    if np.linalg.det(r) < 0.0:
        raise ValueError("rotation has negative determinant (reflection)")
    return r


@dataclass(frozen=True, eq=False)
class HomTransform:
    """Rigid transform mapping coordinates in `frame_to` into `frame_from`.

    p_from = rotation @ p_to + translation. The implicit bottom row of the
    4x4 form is [0 0 0 1].
    """

    rotation: np.ndarray
    translation: np.ndarray
    frame_from: FrameId
    frame_to: FrameId

    def __post_init__(self):
        r = _check_rotation(self.rotation)
        t = np.array(self.translation, dtype=float).reshape(3)
        r.flags.writeable = False
        t.flags.writeable = False
        object.__setattr__(self, "rotation", r)
        object.__setattr__(self, "translation", t)

    @classmethod
    def identity(cls, frame_from: FrameId, frame_to: FrameId | None = None) -> "HomTransform":
        return cls(np.eye(3), np.zeros(3), frame_from, frame_to if frame_to is not None else frame_from)

    def matrix(self) -> np.ndarray:
        m = np.eye(4)
        m[:3, :3] = self.rotation
        m[:3, 3] = self.translation
        return m

    def apply(self, point: np.ndarray) -> np.ndarray:
        return self.rotation @ np.asarray(point, dtype=float) + self.translation

    def __repr__(self):
        return (f"HomTransform({self.frame_from.value}->{self.frame_to.value}, "
                f"t={np.array2string(self.translation, precision=3)})")


def compose(a: HomTransform, b: HomTransform) -> HomTransform:
    """Chain a: F0->F1 with b: F1->F2 into F0->F2."""
    if a.frame_to is not b.frame_from:
        raise FrameChainError(
            f"cannot compose {a.frame_from.value}->{a.frame_to.value} "
            f"with {b.frame_from.value}->{b.frame_to.value}")
    return HomTransform(a.rotation @ b.rotation,
                        a.rotation @ b.translation + a.translation,
                        a.frame_from, b.frame_to)


def invert(t: HomTransform) -> HomTransform:
    rt = t.rotation.T
    return HomTransform(rt, -(rt @ t.translation), t.frame_to, t.frame_from)


def flatten_to_floating_base(support_foot_in_world: HomTransform) -> HomTransform:
    """Project a world->support-foot pose onto the bench plane.

    The floating base shares the support foot's translation but keeps only
    its yaw: rotation becomes Rz(gamma) with roll and pitch zeroed, so the
    base stays parallel to the bench.
    """
    t = support_foot_in_world
    if t.frame_from is not FrameId.WORLD:
        raise FrameChainError(f"expected a world->foot pose, got source {t.frame_from.value}")
    _, beta, gamma = matrix_to_euler_zyx(t.rotation)
    del beta  # matrix_to_euler_zyx already guards the degenerate pitch
    return HomTransform(rot_z(gamma), t.translation, FrameId.WORLD, FrameId.FLOATING_BASE)


@dataclass(frozen=True, eq=False)
class FootPose:
    """6-DoF pose [x y z alpha beta gamma] of a foot in the floating base."""

    position: np.ndarray
    orientation: EulerZYX

    def __post_init__(self):
        p = np.array(self.position, dtype=float).reshape(3)
        p.flags.writeable = False
        object.__setattr__(self, "position", p)
        if not isinstance(self.orientation, EulerZYX):
            object.__setattr__(self, "orientation", EulerZYX(*self.orientation))

    @classmethod
    def zero(cls) -> "FootPose":
        return cls(np.zeros(3), EulerZYX())

    @classmethod
    def from_xyz(cls, x: float, y: float, z: float = 0.0) -> "FootPose":
        return cls(np.array([x, y, z]), EulerZYX())

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.position, self.orientation.as_array()])

    def to_transform(self, frame_from: FrameId, frame_to: FrameId) -> HomTransform:
        return HomTransform(self.orientation.matrix(), self.position, frame_from, frame_to)

    @classmethod
    def from_transform(cls, t: HomTransform) -> "FootPose":
        return cls(t.translation.copy(), EulerZYX.from_matrix(t.rotation))

    def mirrored(self) -> "FootPose":
        """Reflect across the robot's sagittal (xz) plane."""
        p = self.position
        o = self.orientation
        return FootPose(np.array([p[0], -p[1], p[2]]), EulerZYX(-o.alpha, o.beta, -o.gamma))

    def __repr__(self):
        return (f"FootPose(xyz={np.array2string(self.position, precision=3)}, "
                f"rpy=({self.orientation.alpha:.4g}, {self.orientation.beta:.4g}, "
                f"{self.orientation.gamma:.4g}))")


def foot_pose_in_floating_base(world_tag: HomTransform,
                               foot_tag: HomTransform,
                               support_tag: HomTransform) -> FootPose:
    """Pose of a foot relative to the floating base, from camera-frame tags.

    `world_tag` is the bench tag, `foot_tag` the tag of the queried foot and
    `support_tag` the tag of the foot that carries the floating base; all
    three are poses expressed in the camera frame. The chain is: bring both
    foot tags into the world frame, flatten the support foot to get the
    floating base, then express the queried foot in that base. The result
    is invariant to where the camera happens to sit.
    """
    for tag in (world_tag, foot_tag, support_tag):
        if tag.frame_from is not FrameId.CAMERA:
            raise FrameChainError(f"tag poses must be camera-frame, got {tag.frame_from.value}")
    world_inv = invert(world_tag)
    foot_in_world = compose(world_inv, foot_tag)
    support_in_world = compose(world_inv, support_tag)
    base = flatten_to_floating_base(support_in_world)
    foot_in_base = compose(invert(base), foot_in_world)
    return FootPose.from_transform(foot_in_base)


def feet_in_floating_base(world_tag: HomTransform,
                          left_tag: HomTransform,
                          right_tag: HomTransform,
                          support_side: FrameId) -> tuple[FootPose, FootPose]:
    """Both foot poses relative to the floating base on `support_side`."""
    if support_side is FrameId.LEFT_FOOT:
        support_tag = left_tag
    elif support_side is FrameId.RIGHT_FOOT:
        support_tag = right_tag
    else:
        raise FrameChainError(f"support side must be a foot, got {support_side.value}")
    left = foot_pose_in_floating_base(world_tag, left_tag, support_tag)
    right = foot_pose_in_floating_base(world_tag, right_tag, support_tag)
    return left, right


def pose_to_json(t: HomTransform) -> dict:
    """Serialize as {frame_from, frame_to, xyz_mm, rpy_rad}."""
    alpha, beta, gamma = matrix_to_euler_zyx(t.rotation)
    return {
        "frame_from": t.frame_from.value,
        "frame_to": t.frame_to.value,
        "xyz_mm": [float(v) for v in t.translation],
        "rpy_rad": [alpha, beta, gamma],
    }


def pose_from_json(data: dict) -> HomTransform:
    alpha, beta, gamma = (float(v) for v in data["rpy_rad"])
    return HomTransform(euler_zyx_matrix(alpha, beta, gamma),
                        np.asarray(data["xyz_mm"], dtype=float),
                        FrameId(data["frame_from"]), FrameId(data["frame_to"]))
