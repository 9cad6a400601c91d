"""Load-cell force model and center-of-pressure computation.

Each shoe carries four single-axis load cells on its corners. A cell
reports a voltage S and its force follows the affine law f = a*S + b.
The CoP is the force-weighted centroid of the cell positions; the same
formula covers single support (4 cells) and double support (8 cells).
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import InsufficientLoadError
from .geometry import FootPose, rot_z

DEFAULT_MIN_TOTAL_FORCE = 1.0  # N; below this a CoP is numerically meaningless
DEFAULT_HALF_LENGTH = 50.0     # mm, fore-aft half extent of a shoe
DEFAULT_HALF_WIDTH = 25.0      # mm, lateral half extent of a shoe


@dataclass(frozen=True, eq=False)
class LoadCell:
    """One corner sensor: planar position in its shoe frame plus affine params."""

    cell_id: int
    position: np.ndarray  # (2,) mm in the shoe's sole frame
    gain: float           # a, N/V
    offset: float         # b, N

    def __post_init__(self):
        p = np.array(self.position, dtype=float).reshape(2)
        p.flags.writeable = False
        object.__setattr__(self, "position", p)
        if not 1 <= int(self.cell_id) <= 8:
            raise ValueError(f"cell id must be 1..8, got {self.cell_id}")
        if self.gain == 0.0:
            raise ValueError(f"cell {self.cell_id}: zero gain means a dead cell")


@dataclass(frozen=True)
class CellSample:
    """A single reading, either raw voltage or already-converted force."""

    cell_id: int
    voltage: float | None = None
    force: float | None = None

    def __post_init__(self):
        if (self.voltage is None) == (self.force is None):
            raise ValueError("exactly one of voltage/force must be set")

    @classmethod
    def from_voltage(cls, cell_id: int, voltage: float) -> "CellSample":
        return cls(cell_id, voltage=float(voltage))

    @classmethod
    def from_force(cls, cell_id: int, force: float) -> "CellSample":
        return cls(cell_id, force=float(force))


@dataclass(frozen=True, eq=False)
class CopReading:
    """Planar CoP (mm, floating base) plus the total normal force (N)."""

    cop: np.ndarray
    grf: float

    def __post_init__(self):
        c = np.array(self.cop, dtype=float).reshape(2)
        c.flags.writeable = False
        object.__setattr__(self, "cop", c)


def _rectangle_from_cells(cells: Sequence[LoadCell]) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Validate the 4 cells form a rectangle; return (center, u_axis, v_axis).

    Axes are half-edge vectors, so the corners are center +/- u +/- v.
    """
    if len(cells) != 4:
        raise ValueError(f"a shoe needs exactly 4 cells, got {len(cells)}")
    pts = np.stack([c.position for c in cells])
    center = pts.mean(axis=0)
    rel = pts - center
    order = np.argsort(np.arctan2(rel[:, 1], rel[:, 0]))
    ring = rel[order]
    e1 = 0.5 * (ring[1] - ring[0])
    e2 = 0.5 * (ring[3] - ring[0])
    scale = max(1.0, np.abs(pts).max())
    if abs(np.dot(e1, e2)) > 1e-6 * scale * scale:
        raise ValueError("shoe cells do not form a rectangle")
    area = 4.0 * np.linalg.norm(e1) * np.linalg.norm(e2)
    if area <= 1e-9:
        raise ValueError("shoe cell rectangle has zero area")
    # Opposite corners must mirror through the center.
    if np.abs(ring[0] + ring[2]).max() > 1e-6 * scale or np.abs(ring[1] + ring[3]).max() > 1e-6 * scale:
        raise ValueError("shoe cells do not form a rectangle")
    return center, e1, e2


@dataclass(frozen=True, eq=False)
class ShoeLayout:
    """Cell geometry and affine parameters for both shoes.

    Cell ids 1..4 belong to the left shoe and 5..8 to the right shoe by
    convention; positions are in each shoe's own sole frame.
    """

    left_cells: tuple[LoadCell, ...]
    right_cells: tuple[LoadCell, ...]

    def __post_init__(self):
        object.__setattr__(self, "left_cells", tuple(self.left_cells))
        object.__setattr__(self, "right_cells", tuple(self.right_cells))
        ids = [c.cell_id for c in self.left_cells + self.right_cells]
        if len(set(ids)) != 8:
            raise ValueError(f"need 8 distinct cell ids, got {sorted(ids)}")
        _rectangle_from_cells(self.left_cells)
        _rectangle_from_cells(self.right_cells)

    @classmethod
    def default(cls, half_length: float = DEFAULT_HALF_LENGTH,
                half_width: float = DEFAULT_HALF_WIDTH,
                gain: float = 50.0, offset: float = 2.0) -> "ShoeLayout":
        corners = [(half_length, half_width), (half_length, -half_width),
                   (-half_length, half_width), (-half_length, -half_width)]
        left = tuple(LoadCell(i + 1, np.array(c), gain, offset) for i, c in enumerate(corners))
        right = tuple(LoadCell(i + 5, np.array(c), gain, offset) for i, c in enumerate(corners))
        return cls(left, right)

    @property
    def all_cells(self) -> tuple[LoadCell, ...]:
        return self.left_cells + self.right_cells

    def to_json(self) -> dict:
        cells = []
        for shoe, shoe_cells in (("left", self.left_cells), ("right", self.right_cells)):
            for c in shoe_cells:
                cells.append({"id": c.cell_id, "shoe": shoe,
                              "xy_mm": [float(c.position[0]), float(c.position[1])],
                              "a": c.gain, "b": c.offset})
        return {"cells": cells}

    @classmethod
    def from_json(cls, data: dict) -> "ShoeLayout":
        left, right = [], []
        for entry in data["cells"]:
            cell = LoadCell(int(entry["id"]), np.asarray(entry["xy_mm"], dtype=float),
                            float(entry["a"]), float(entry["b"]))
            shoe = entry.get("shoe", "left" if cell.cell_id <= 4 else "right")
            (left if shoe == "left" else right).append(cell)
        return cls(tuple(left), tuple(right))

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_json(), fh, indent=2, sort_keys=True)

    @classmethod
    def load(cls, path) -> "ShoeLayout":
        with open(path) as fh:
            return cls.from_json(json.load(fh))


def cell_force(sample: CellSample, cell: LoadCell) -> float:
    """Convert a voltage sample to force via f = a*S + b.

    Negative results are permitted; they get clamped downstream where a
    compressive-only interpretation is needed.
    """
    if sample.voltage is None:
        raise ValueError("cell_force needs a voltage sample")
    if sample.cell_id != cell.cell_id:
        raise ValueError(f"sample is for cell {sample.cell_id}, params for {cell.cell_id}")
    return cell.gain * sample.voltage + cell.offset


def cop_from_forces(forces: Iterable[tuple[float, np.ndarray]],
                    min_total: float = DEFAULT_MIN_TOTAL_FORCE) -> CopReading:
    """Force-weighted centroid of cell positions.

    Negative individual forces are clamped to zero before summing (load
    cells cannot pull on the ground). Raises InsufficientLoadError when the
    clamped total falls below `min_total`, which means the robot is
    airborne or a sensor is broken.
    """
    pairs = list(forces)
    if len(pairs) < 4:
        raise ValueError(f"need at least 4 (force, position) entries, got {len(pairs)}")
    f = np.array([p[0] for p in pairs], dtype=float)
    pos = np.array([np.asarray(p[1], dtype=float).reshape(2) for p in pairs])
    f = np.maximum(f, 0.0)
    total = float(f.sum())
    if total < min_total:
        raise InsufficientLoadError(f"total force {total:.3g} N below {min_total:.3g} N")
    cop = (f[:, None] * pos).sum(axis=0) / total
    return CopReading(cop, total)


def _planar_parts(pose: FootPose) -> tuple[np.ndarray, float]:
    """(xy translation, yaw) of a foot pose; z and tilt are contact details
    that do not move where a cell sits on the ground plane."""
    return pose.position[:2].copy(), pose.orientation.gamma


def transform_cell_positions(cells: Sequence[LoadCell], pose: FootPose) -> np.ndarray:
    """Map shoe-local cell positions through the planar part of a foot pose."""
    xy, yaw = _planar_parts(pose)
    rot = rot_z(yaw)[:2, :2]
    local = np.stack([c.position for c in cells])
    return local @ rot.T + xy


def sensor_positions_in_base(layout: ShoeLayout,
                             left_pose: FootPose,
                             right_pose: FootPose | None = None) -> np.ndarray:
    """All 8 cell positions in the floating base, left cells first.

    With the floating base sitting on the right shoe the right cells stay
    at their stored positions; pass `right_pose` when the base is on the
    left shoe instead.
    """
    if right_pose is None:
        right_pose = FootPose.zero()
    left = transform_cell_positions(layout.left_cells, left_pose)
    right = transform_cell_positions(layout.right_cells, right_pose)
    return np.vstack([left, right])


# --- support polygon helpers -------------------------------------------------

def convex_hull(points: np.ndarray) -> np.ndarray:
    """Convex hull of 2-D points, counter-clockwise (Andrew monotone chain)."""
    pts = np.unique(np.asarray(points, dtype=float).reshape(-1, 2), axis=0)
    if len(pts) < 3:
        return pts
    order = np.lexsort((pts[:, 1], pts[:, 0]))
    pts = pts[order]

    def half(seq):
        chain = []
        for p in seq:
            while len(chain) >= 2 and np.cross(chain[-1] - chain[-2], p - chain[-2]) <= 0.0:
                chain.pop()
            chain.append(p)
        return chain

    lower = half(pts)
    upper = half(pts[::-1])
    return np.array(lower[:-1] + upper[:-1])


def polygon_margin(hull: np.ndarray, point: np.ndarray) -> float:
    """Signed distance from a point to a convex CCW polygon boundary.

    Positive inside, negative outside. Degenerate hulls (< 3 vertices)
    count as zero-margin.
    """
    hull = np.asarray(hull, dtype=float)
    p = np.asarray(point, dtype=float).reshape(2)
    if len(hull) < 3:
        return -float(np.min(np.linalg.norm(hull - p, axis=1))) if len(hull) else -np.inf
    margin = np.inf
    for i in range(len(hull)):
        a = hull[i]
        b = hull[(i + 1) % len(hull)]
        edge = b - a
        margin = min(margin, float(np.cross(edge, p - a) / np.linalg.norm(edge)))
    return margin


def point_in_polygon(hull: np.ndarray, point: np.ndarray, margin: float = 0.0) -> bool:
    return polygon_margin(hull, point) >= margin
