"""Quasi-static kinematic biped exposing nothing but sensor outputs.

The robot is a symmetric pair of 5-joint legs under a torso mass, rooted
at whichever foot carries the floating base. Motion is slow enough that
the CoP coincides with the CoM ground projection; ground forces are
distributed to the shoe corner cells so that the load-cell CoP formula
reproduces that projection exactly. Consumers see only what a real setup
would publish: load-cell voltages/forces and camera-tag foot poses.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.optimize import nnls

from .cost import Observation
from .errors import InsufficientLoadError, RobotFallError, TrajectoryFormatError
from .gait_plan import Support
from .geometry import (FootPose, FrameId, HomTransform, compose, euler_zyx_matrix,
                       feet_in_floating_base, matrix_to_euler_zyx, rot_x, rot_y, rot_z)
from .joints import DEFAULT_JOINT_LIMITS, LEG_JOINT_NAMES, JointVector
from .optimizer import BaseSelectable, SensorWorld
from .sensing import (ShoeLayout, _rectangle_from_cells, convex_hull, cop_from_forces,
                      polygon_margin, sensor_positions_in_base, transform_cell_positions)

DEFAULT_CONTACT_HEIGHT = 3.0  # mm; a sole below this height counts as touching


@dataclass(frozen=True)
class LinkSpec:
    name: str
    length: float       # mm
    mass: float         # kg
    com_offset: float   # fraction along the link from its proximal joint

    def __post_init__(self):
        if self.length <= 0.0 or self.mass < 0.0 or not 0.0 <= self.com_offset <= 1.0:
            raise ValueError(f"bad link spec {self.name}")


@dataclass(frozen=True)
class NoiseSpec:
    """Optional additive zero-mean Gaussian noise, per sensing channel."""

    voltage: float = 0.0       # V, per load cell
    tag_position: float = 0.0  # mm, per tag translation axis
    tag_angle: float = 0.0     # rad, per tag rotation axis

    @property
    def enabled(self) -> bool:
        return self.voltage > 0.0 or self.tag_position > 0.0 or self.tag_angle > 0.0

    def to_json(self) -> dict:
        return {"voltage": self.voltage, "tag_position": self.tag_position,
                "tag_angle": self.tag_angle}

    @classmethod
    def from_json(cls, data: dict) -> "NoiseSpec":
        return cls(float(data.get("voltage", 0.0)), float(data.get("tag_position", 0.0)),
                   float(data.get("tag_angle", 0.0)))


@dataclass
class SimRobot:
    """Symmetric biped: torso over a pelvis, two legs of thigh/tibia/foot.

    Dimensions are small-humanoid scale (mm) and masses sum to 5.3 kg.
    These numbers exist only so the simulated sensors behave plausibly;
    nothing downstream of the sensor interface may read them.
    """

    thigh_length: float = 100.0
    tibia_length: float = 100.0
    ankle_height: float = 45.0
    hip_half_width: float = 50.0
    torso_com_height: float = 85.0
    torso_mass: float = 3.3
    thigh_mass: float = 0.45
    tibia_mass: float = 0.35
    foot_mass: float = 0.2
    thigh_com_offset: float = 0.5
    tibia_com_offset: float = 0.5
    foot_com_offset: float = 0.5
    gravity: float = 9.81  # m/s^2
    contact_height: float = DEFAULT_CONTACT_HEIGHT
    jack_limit: float = 6.0  # mm of bench penetration tolerated as preload
    shoe: ShoeLayout = field(default_factory=ShoeLayout.default)
    joint_limits: dict = field(default_factory=lambda: dict(DEFAULT_JOINT_LIMITS))
    noise: NoiseSpec = field(default_factory=NoiseSpec)

    def __post_init__(self):
        if self.total_mass <= 0.0:
            raise ValueError("robot needs positive total mass")
        _ = self.links  # constructing the LinkSpecs validates the geometry

    @property
    def total_mass(self) -> float:
        return self.torso_mass + 2.0 * (self.thigh_mass + self.tibia_mass + self.foot_mass)

    @property
    def weight_newtons(self) -> float:
        return self.total_mass * self.gravity

    @property
    def links(self) -> tuple[LinkSpec, ...]:
        return (
            LinkSpec("torso", self.torso_com_height, self.torso_mass, 1.0),
            LinkSpec("thigh", self.thigh_length, self.thigh_mass, self.thigh_com_offset),
            LinkSpec("tibia", self.tibia_length, self.tibia_mass, self.tibia_com_offset),
            LinkSpec("foot", self.ankle_height, self.foot_mass, self.foot_com_offset),
        )

    @property
    def nominal_stance_width(self) -> float:
        return 2.0 * self.hip_half_width

    def to_json(self) -> dict:
        return {
            "links": {
                "thigh_length": self.thigh_length, "tibia_length": self.tibia_length,
                "ankle_height": self.ankle_height, "hip_half_width": self.hip_half_width,
                "torso_com_height": self.torso_com_height,
            },
            "masses": {
                "torso": self.torso_mass, "thigh": self.thigh_mass,
                "tibia": self.tibia_mass, "foot": self.foot_mass,
            },
            "com_offsets": {
                "thigh": self.thigh_com_offset, "tibia": self.tibia_com_offset,
                "foot": self.foot_com_offset,
            },
            "gravity": self.gravity,
            "contact_height_mm": self.contact_height,
            "jack_limit_mm": self.jack_limit,
            "joint_limits": {k: list(v) for k, v in sorted(self.joint_limits.items())},
            "shoe": self.shoe.to_json(),
            "noise": self.noise.to_json(),
        }

    @classmethod
    def from_json(cls, data: dict) -> "SimRobot":
        links = data.get("links", {})
        masses = data.get("masses", {})
        offsets = data.get("com_offsets", {})
        kwargs = dict(
            thigh_length=float(links.get("thigh_length", 100.0)),
            tibia_length=float(links.get("tibia_length", 100.0)),
            ankle_height=float(links.get("ankle_height", 45.0)),
            hip_half_width=float(links.get("hip_half_width", 50.0)),
            torso_com_height=float(links.get("torso_com_height", 85.0)),
            torso_mass=float(masses.get("torso", 3.3)),
            thigh_mass=float(masses.get("thigh", 0.45)),
            tibia_mass=float(masses.get("tibia", 0.35)),
            foot_mass=float(masses.get("foot", 0.2)),
            thigh_com_offset=float(offsets.get("thigh", 0.5)),
            tibia_com_offset=float(offsets.get("tibia", 0.5)),
            foot_com_offset=float(offsets.get("foot", 0.5)),
            gravity=float(data.get("gravity", 9.81)),
            contact_height=float(data.get("contact_height_mm", DEFAULT_CONTACT_HEIGHT)),
            jack_limit=float(data.get("jack_limit_mm", 6.0)),
        )
        if "joint_limits" in data:
            kwargs["joint_limits"] = {k: (float(v[0]), float(v[1]))
                                      for k, v in data["joint_limits"].items()}
        if "shoe" in data:
            kwargs["shoe"] = ShoeLayout.from_json(data["shoe"])
        if "noise" in data:
            kwargs["noise"] = NoiseSpec.from_json(data["noise"])
        return cls(**kwargs)

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_json(), fh, indent=2, sort_keys=True)

    @classmethod
    def load(cls, path) -> "SimRobot":
        with open(path) as fh:
            return cls.from_json(json.load(fh))


@dataclass(frozen=True)
class ContactState:
    left: bool
    right: bool

    @property
    def support(self) -> Support:
        if self.left and self.right:
            return Support.DOUBLE
        if self.left:
            return Support.SINGLE_LEFT
        if self.right:
            return Support.SINGLE_RIGHT
        raise InsufficientLoadError("no shoe in contact")


def _trans(x: float, y: float, z: float) -> np.ndarray:
    m = np.eye(4)
    m[:3, 3] = (x, y, z)
    return m


def _rx4(angle: float) -> np.ndarray:
    m = np.eye(4)
    m[:3, :3] = rot_x(angle)
    return m


def _ry4(angle: float) -> np.ndarray:
    m = np.eye(4)
    m[:3, :3] = rot_y(angle)
    return m


def _rigid_inverse(m: np.ndarray) -> np.ndarray:
    out = np.eye(4)
    rt = m[:3, :3].T
    out[:3, :3] = rt
    out[:3, 3] = -(rt @ m[:3, 3])
    return out


def _pelvis_frames(robot: SimRobot, q: JointVector) -> dict[str, np.ndarray]:
    frames = {"pelvis": np.eye(4), "torso_com": _trans(0.0, 0.0, robot.torso_com_height)}
    for side, sign in (("L", 1.0), ("R", -1.0)):
        hip = (_trans(0.0, sign * robot.hip_half_width, 0.0)
               @ _rx4(q.get(f"{side}HipRoll")) @ _ry4(q.get(f"{side}HipPitch")))
        knee = hip @ _trans(0.0, 0.0, -robot.thigh_length) @ _ry4(q.get(f"{side}KneePitch"))
        ankle = (knee @ _trans(0.0, 0.0, -robot.tibia_length)
                 @ _ry4(q.get(f"{side}AnklePitch")) @ _rx4(q.get(f"{side}AnkleRoll")))
        p = side.lower()
        frames[f"{p}_hip"] = hip
        frames[f"{p}_thigh_com"] = hip @ _trans(0.0, 0.0, -robot.thigh_length * robot.thigh_com_offset)
        frames[f"{p}_knee"] = knee
        frames[f"{p}_tibia_com"] = knee @ _trans(0.0, 0.0, -robot.tibia_length * robot.tibia_com_offset)
        frames[f"{p}_ankle"] = ankle
        frames[f"{p}_foot_com"] = ankle @ _trans(0.0, 0.0, -robot.ankle_height * robot.foot_com_offset)
        frames[f"{p}_sole"] = ankle @ _trans(0.0, 0.0, -robot.ankle_height)
    return frames


def forward_kinematics(robot: SimRobot, q: JointVector,
                       base_side: FrameId = FrameId.RIGHT_FOOT) -> dict[str, np.ndarray]:
    """All link and foot frames as 4x4 transforms in the world frame.

    The world frame is the sole of the foot carrying the floating base,
    pinned flat on the bench (quasi-static support never tips its stance
    foot). Keys: pelvis, torso_com and per side {l,r}_{hip, thigh_com,
    knee, tibia_com, ankle, foot_com, sole}.
    """
    frames = _pelvis_frames(robot, q)
    root = frames["l_sole"] if base_side is FrameId.LEFT_FOOT else frames["r_sole"]
    root_inv = _rigid_inverse(root)
    return {name: root_inv @ m for name, m in frames.items()}


_MASS_POINTS = (("torso_com", "torso_mass"),
                ("l_thigh_com", "thigh_mass"), ("r_thigh_com", "thigh_mass"),
                ("l_tibia_com", "tibia_mass"), ("r_tibia_com", "tibia_mass"),
                ("l_foot_com", "foot_mass"), ("r_foot_com", "foot_mass"))


def com_ground_projection(robot: SimRobot, q: JointVector,
                          base_side: FrameId = FrameId.RIGHT_FOOT) -> np.ndarray:
    """Ground-plane (xy, mm) projection of the whole-body mass center.

    Under the quasi-static assumption this is exactly where the CoP sits.
    """
    frames = forward_kinematics(robot, q, base_side)
    weighted = np.zeros(2)
    for frame_name, mass_name in _MASS_POINTS:
        weighted += getattr(robot, mass_name) * frames[frame_name][:2, 3]
    return weighted / robot.total_mass


def _bilinear_weights(cells, pose: FootPose, point: np.ndarray,
                      tol: float = 1e-9) -> np.ndarray | None:
    """Corner weights reproducing `point` as the weighted cell centroid.

    Returns None when the point lies outside this shoe's rectangle (no
    non-negative corner decomposition exists there).
    """
    center, e1, e2 = _rectangle_from_cells(cells)
    xy = pose.position[:2]
    yaw = pose.orientation.gamma
    c, s = math.cos(yaw), math.sin(yaw)
    rel = np.asarray(point, dtype=float) - xy
    local = np.array([c * rel[0] + s * rel[1], -s * rel[0] + c * rel[1]]) - center
    a = float(np.linalg.norm(e1))
    b = float(np.linalg.norm(e2))
    u = float(local @ (e1 / a))
    v = float(local @ (e2 / b))
    slack = tol * max(a, b)
    if abs(u) > a + slack or abs(v) > b + slack:
        return None
    u = min(max(u, -a), a)
    v = min(max(v, -b), b)
    weights = np.empty(4)
    for i, cell in enumerate(cells):
        ci = cell.position - center
        ui = float(ci @ (e1 / a))
        vi = float(ci @ (e2 / b))
        weights[i] = 0.25 * (1.0 + u * ui / (a * a)) * (1.0 + v * vi / (b * b))
    return weights


def _nnls_forces(positions: np.ndarray, cop: np.ndarray, grf: float) -> np.ndarray:
    a_mat = np.vstack([np.ones(len(positions)), positions[:, 0], positions[:, 1]])
    b_vec = np.array([grf, grf * cop[0], grf * cop[1]])
    forces, residual = nnls(a_mat, b_vec)
    if residual > 1e-9 * max(1.0, float(np.linalg.norm(b_vec))):
        raise RobotFallError(
            f"CoP {np.asarray(cop).tolist()} is not realizable with non-negative cell forces")
    return forces


def distribute_forces(cop: np.ndarray, grf: float, contacts: ContactState,
                      layout: ShoeLayout, left_pose: FootPose,
                      right_pose: FootPose) -> np.ndarray:
    """Split the total ground force over the 8 corner cells.

    Double support splits the load between shoes by the lever rule along
    the axis joining the shoe centers, then spreads each share over that
    shoe's rectangle with bilinear corner weights. All forces come out
    non-negative and the load-cell CoP formula inverts the distribution
    exactly. Raises RobotFallError when the CoP is outside the support
    polygon of the contacting shoes.
    """
    cop = np.asarray(cop, dtype=float).reshape(2)
    left_xy = transform_cell_positions(layout.left_cells, left_pose)
    right_xy = transform_cell_positions(layout.right_cells, right_pose)
    active: list[np.ndarray] = []
    if contacts.left:
        active.append(left_xy)
    if contacts.right:
        active.append(right_xy)
    if not active:
        raise InsufficientLoadError("no shoe in contact")
    hull = convex_hull(np.vstack(active))
    if polygon_margin(hull, cop) < 0.0:
        raise RobotFallError(
            f"CoP {cop.tolist()} outside the {contacts.support.value} support polygon")

    forces = np.zeros(8)
    if contacts.support is Support.SINGLE_LEFT:
        weights = _bilinear_weights(layout.left_cells, left_pose, cop)
        if weights is None:
            raise RobotFallError(f"CoP {cop.tolist()} outside the left shoe")
        forces[:4] = grf * weights
        return forces
    if contacts.support is Support.SINGLE_RIGHT:
        weights = _bilinear_weights(layout.right_cells, right_pose, cop)
        if weights is None:
            raise RobotFallError(f"CoP {cop.tolist()} outside the right shoe")
        forces[4:] = grf * weights
        return forces

    center_l = left_xy.mean(axis=0)
    center_r = right_xy.mean(axis=0)
    axis = center_l - center_r
    span = float(axis @ axis)
    if span < 1e-12:
        forces[:] = _nnls_forces(np.vstack([left_xy, right_xy]), cop, grf)
        return forces
    share_l = min(max(float((cop - center_r) @ axis) / span, 0.0), 1.0)
    perp = cop - center_r - share_l * axis
    weights_l = _bilinear_weights(layout.left_cells, left_pose, center_l + perp)
    weights_r = _bilinear_weights(layout.right_cells, right_pose, center_r + perp)
    if weights_l is None or weights_r is None:
        # Off-axis CoP past a shoe edge: fall back to a non-negative
        # least-squares split over all 8 cells (still exact for any CoP
        # inside the hull).
        forces[:] = _nnls_forces(np.vstack([left_xy, right_xy]), cop, grf)
        return forces
    forces[:4] = grf * share_l * weights_l
    forces[4:] = grf * (1.0 - share_l) * weights_r
    return forces


# Arbitrary fixed camera pose (world expressed in the camera frame). The
# tag pipeline is invariant to it; it is non-trivial on purpose so tests
# exercise real transform chains.
DEFAULT_CAMERA = HomTransform(euler_zyx_matrix(0.15, 2.45, 0.35),
                              np.array([120.0, -80.0, 760.0]),
                              FrameId.CAMERA, FrameId.WORLD)


class SimWorld(SensorWorld, BaseSelectable):
    """SensorWorld over a SimRobot.

    `believed` holds the affine load-cell parameters the sensing pipeline
    applies to raw voltages; the physically true parameters live in the
    robot's shoe layout. They coincide unless the cells have drifted (the
    self-calibration scenario). One instance is single-threaded: it holds
    one configuration at a time, like a physical robot.
    """

    def __init__(self, robot: SimRobot | None = None, believed=None,
                 base_side: FrameId = FrameId.RIGHT_FOOT, seed: int = 0,
                 camera: HomTransform | None = None,
                 settle_hook: Callable[[], None] | None = None):
        self.robot = robot if robot is not None else SimRobot()
        cells = self.robot.shoe.all_cells
        self._true_gains = np.array([c.gain for c in cells])
        self._true_offsets = np.array([c.offset for c in cells])
        if believed is None:
            self._believed_gains = self._true_gains.copy()
            self._believed_offsets = self._true_offsets.copy()
        else:
            self._believed_gains = np.array(believed.gains, dtype=float).reshape(8)
            self._believed_offsets = np.array(believed.offsets, dtype=float).reshape(8)
        self._base_side = base_side
        self._camera = camera if camera is not None else DEFAULT_CAMERA
        self._rng = np.random.default_rng(seed)
        self._settle_hook = settle_hook
        self._q: JointVector | None = None
        self.set_joints(JointVector.zeros())

    # -- SensorWorld interface -------------------------------------------

    def set_joints(self, q: JointVector) -> None:
        if set(q.names) != set(LEG_JOINT_NAMES):
            raise TrajectoryFormatError(
                f"world drives joints {sorted(LEG_JOINT_NAMES)}, got {sorted(q.names)}")
        self._q = q.clamped(self.robot.joint_limits)
        if self._settle_hook is not None:
            self._settle_hook()

    def observe(self) -> Observation:
        state = self._sense()
        reading = cop_from_forces(zip(state["reported_forces"], state["positions"]))
        return Observation(reading, state["left_pose"], state["right_pose"], self._base_side)

    # -- measurement-setup knobs (not robot model data) -------------------

    def set_base_side(self, side: FrameId) -> None:
        if side not in (FrameId.LEFT_FOOT, FrameId.RIGHT_FOOT):
            raise ValueError("base side must be a foot frame")
        self._base_side = side

    @property
    def base_side(self) -> FrameId:
        return self._base_side

    # -- raw sensor taps used by reference capture ------------------------

    def raw_voltages(self) -> np.ndarray:
        return self._sense()["voltages"]

    def cell_positions(self) -> np.ndarray:
        return self._sense()["positions"]

    def reported_cell_forces(self) -> np.ndarray:
        return self._sense()["reported_forces"]

    def contact_state(self) -> ContactState:
        return self._contacts(forward_kinematics(self.robot, self._q, self._base_side))

    def support_polygon(self) -> np.ndarray:
        """Convex hull of the contacting cells (for stability checks)."""
        state = self._sense()
        mask = np.repeat([state["contacts"].left, state["contacts"].right], 4)
        return convex_hull(state["positions"][mask])

    # -- internals ---------------------------------------------------------

    def _contacts(self, frames: dict[str, np.ndarray]) -> ContactState:
        height = self.robot.contact_height
        return ContactState(frames["l_sole"][2, 3] < height,
                            frames["r_sole"][2, 3] < height)

    def _resting_pose(self, sole: np.ndarray, grounded: bool) -> np.ndarray:
        """Physical pose of a sole. A grounded shoe rests flat ON the bench:
        its commanded height error and tilt are absorbed by contact preload,
        so only the in-plane part (x, y, yaw) survives. An airborne shoe
        follows the chain exactly. A chain sole pressed too far below the
        bench would jack the robot up off its other foot, which quasi-static
        support cannot survive."""
        if not grounded:
            return sole
        if sole[2, 3] < -self.robot.jack_limit:
            raise RobotFallError(
                f"sole driven {-sole[2, 3]:.1f} mm into the bench; robot jacks itself over")
        _, _, gamma = matrix_to_euler_zyx(sole[:3, :3])
        out = sole.copy()
        out[:3, :3] = rot_z(gamma)
        out[2, 3] = 0.0
        return out

    def _tag(self, frames: dict[str, np.ndarray], key: str, foot: FrameId) -> HomTransform:
        m = frames[key]
        rotation = m[:3, :3]
        translation = m[:3, 3]
        noise = self.robot.noise
        if noise.enabled and (noise.tag_position > 0.0 or noise.tag_angle > 0.0):
            translation = translation + self._rng.normal(0.0, noise.tag_position, 3)
            wobble = self._rng.normal(0.0, noise.tag_angle, 3)
            rotation = rotation @ euler_zyx_matrix(*wobble)
        world_to_foot = HomTransform(rotation, translation, FrameId.WORLD, foot)
        return compose(self._camera, world_to_foot)

    def _sense(self) -> dict:
        if self._q is None:
            raise RuntimeError("set_joints must be called before sensing")
        frames = forward_kinematics(self.robot, self._q, self._base_side)
        contacts = self._contacts(frames)
        if not contacts.left and not contacts.right:
            raise InsufficientLoadError("robot airborne: no shoe in contact")
        frames = dict(frames,
                      l_sole=self._resting_pose(frames["l_sole"], contacts.left),
                      r_sole=self._resting_pose(frames["r_sole"], contacts.right))
        left_pose, right_pose = feet_in_floating_base(
            self._camera,
            self._tag(frames, "l_sole", FrameId.LEFT_FOOT),
            self._tag(frames, "r_sole", FrameId.RIGHT_FOOT),
            self._base_side)
        cop = com_ground_projection(self.robot, self._q, self._base_side)
        true_forces = distribute_forces(cop, self.robot.weight_newtons, contacts,
                                        self.robot.shoe, left_pose, right_pose)
        voltages = (true_forces - self._true_offsets) / self._true_gains
        if self.robot.noise.voltage > 0.0:
            voltages = voltages + self._rng.normal(0.0, self.robot.noise.voltage, 8)
        reported = self._believed_gains * voltages + self._believed_offsets
        positions = sensor_positions_in_base(self.robot.shoe, left_pose, right_pose)
        return {"contacts": contacts, "left_pose": left_pose, "right_pose": right_pose,
                "cop_true": cop, "true_forces": true_forces, "voltages": voltages,
                "reported_forces": reported, "positions": positions}
