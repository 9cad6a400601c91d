"""Joint vectors for the ten leg joints used in walking.

Five joints per leg (HipRoll, HipPitch, KneePitch, AnklePitch, AnkleRoll);
roll joints rotate about x and shift weight sideways, pitch joints rotate
about y and handle lifting/stepping. Left/right mirroring swaps sides and
flips the sign of the roll channels.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .errors import TrajectoryFormatError

LEG_JOINT_NAMES = (
    "LHipRoll", "LHipPitch", "LKneePitch", "LAnklePitch", "LAnkleRoll",
    "RHipRoll", "RHipPitch", "RKneePitch", "RAnklePitch", "RAnkleRoll",
)

ROLL_JOINTS = ("LHipRoll", "LAnkleRoll", "RHipRoll", "RAnkleRoll")
PITCH_JOINTS = ("LHipPitch", "LKneePitch", "LAnklePitch",
                "RHipPitch", "RKneePitch", "RAnklePitch")

# Symmetric, NAO-plausible ranges (rad). Symmetry keeps mirrored
# trajectories inside the same limits as their originals.
DEFAULT_JOINT_LIMITS: dict[str, tuple[float, float]] = {}
for _side in ("L", "R"):
    DEFAULT_JOINT_LIMITS[f"{_side}HipRoll"] = (-0.45, 0.45)
    DEFAULT_JOINT_LIMITS[f"{_side}AnkleRoll"] = (-0.45, 0.45)
    DEFAULT_JOINT_LIMITS[f"{_side}HipPitch"] = (-1.5, 1.5)
    DEFAULT_JOINT_LIMITS[f"{_side}KneePitch"] = (-0.1, 2.0)
    DEFAULT_JOINT_LIMITS[f"{_side}AnklePitch"] = (-1.0, 1.0)


def mirror_joint_name(name: str) -> str:
    if name.startswith("L"):
        return "R" + name[1:]
    if name.startswith("R"):
        return "L" + name[1:]
    return name


@dataclass(frozen=True, eq=False)
class JointVector:
    """Ordered joint-name -> angle map; the only thing written to a world."""

    names: tuple[str, ...]
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "names", tuple(self.names))
        v = np.array(self.values, dtype=float).reshape(len(self.names))
        v.flags.writeable = False
        object.__setattr__(self, "values", v)
        if len(set(self.names)) != len(self.names):
            raise ValueError("duplicate joint names")

    @classmethod
    def zeros(cls, names: Sequence[str] = LEG_JOINT_NAMES) -> "JointVector":
        return cls(tuple(names), np.zeros(len(names)))

    @classmethod
    def from_dict(cls, mapping: Mapping[str, float]) -> "JointVector":
        return cls(tuple(mapping.keys()), np.array(list(mapping.values()), dtype=float))

    def __len__(self):
        return len(self.names)

    def __eq__(self, other):
        return (isinstance(other, JointVector) and self.names == other.names
                and np.array_equal(self.values, other.values))

    def index(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise KeyError(f"no joint named {name!r}") from None

    def get(self, name: str) -> float:
        return float(self.values[self.index(name)])

    def as_dict(self) -> dict[str, float]:
        return {n: float(v) for n, v in zip(self.names, self.values)}

    def with_values(self, values: np.ndarray) -> "JointVector":
        return JointVector(self.names, values)

    def updated(self, mapping: Mapping[str, float]) -> "JointVector":
        v = self.values.copy()
        for name, val in mapping.items():
            v[self.index(name)] = val
        return JointVector(self.names, v)

    def active_indices(self, active: Sequence[str]) -> np.ndarray:
        return np.array([self.index(n) for n in active], dtype=int)

    def clamped(self, limits: Mapping[str, tuple[float, float]] | None) -> "JointVector":
        if limits is None:
            return self
        v = self.values.copy()
        for i, name in enumerate(self.names):
            if name in limits:
                lo, hi = limits[name]
                v[i] = min(max(v[i], lo), hi)
        return JointVector(self.names, v)


def mirror_joint_vector(q: JointVector) -> JointVector:
    """Swap left/right channels; roll channels change sign, pitch channels copy."""
    values = np.empty(len(q))
    for i, name in enumerate(q.names):
        partner = mirror_joint_name(name)
        try:
            j = q.names.index(partner)
        except ValueError:
            raise TrajectoryFormatError(
                f"joint {name!r} has no mirror partner {partner!r}") from None
        sign = -1.0 if "Roll" in name else 1.0
        values[i] = sign * q.values[j]
    return JointVector(q.names, values)
