"""Model-free descent loop over an opaque sensor world.

Everything here talks to the robot (real or simulated) through two calls
only: set_joints(q) and observe(). No kinematic or inertial data crosses
that interface; gradients come from finite differences of the sensed cost
as single joints are nudged back and forth, and the configuration is
updated by plain gradient descent until the cost is small enough or stops
changing.
"""
from __future__ import annotations

import csv
import json
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .cost import CostWeights, Observation, evaluate_cost
from .errors import (ConvergenceError, InsufficientLoadError, LineSearchStallError,
                     RobotFallError, TrajectoryFormatError)
from .gait_plan import GaitCycle, TransitionObjective, mirror_transition
from .geometry import FrameId
from .joints import DEFAULT_JOINT_LIMITS, JointVector, mirror_joint_vector

MAX_BACKTRACKS = 20


class SensorWorld(ABC):
    """The only contract the optimizer sees: write joints, read sensors."""

    @abstractmethod
    def set_joints(self, q: JointVector) -> None:
        """Move the robot to configuration q (clamped to its own limits)."""

    @abstractmethod
    def observe(self) -> Observation:
        """Sensor snapshot reflecting the most recent set_joints."""


class BaseSelectable(ABC):
    """Worlds whose sensing pipeline can re-attach the floating base to
    either foot. This is a frame-bookkeeping choice of the measurement
    setup, not robot model data, so it lives outside the SensorWorld
    firewall."""

    @abstractmethod
    def set_base_side(self, side: FrameId) -> None: ...


class QueryCounter(SensorWorld):
    """Pass-through wrapper counting world queries (one observe == one search)."""

    def __init__(self, world: SensorWorld):
        self.world = world
        self.observes = 0
        self.set_calls = 0

    def set_joints(self, q: JointVector) -> None:
        self.set_calls += 1
        self.world.set_joints(q)

    def observe(self) -> Observation:
        self.observes += 1
        return self.world.observe()


@dataclass(frozen=True)
class FixedStep:
    """Constant step size. The default is tuned to the bundled simulated
    robot with costs in mm^2; curvatures there are on the order of 1e5
    mm^2/rad^2, so usable fixed steps are a few 1e-6 rad per unit gradient."""

    eta: float = 5e-6

    def __post_init__(self):
        if self.eta <= 0.0:
            raise ValueError("step size must be positive")


@dataclass(frozen=True)
class ArmijoStep:
    """Backtracking line search: largest eta = eta_max * beta^k satisfying
    f(q - eta*g) <= f(q) - c * eta * |g|^2."""

    c: float = 1e-4
    beta: float = 0.5
    eta_max: float = 2.0

    def __post_init__(self):
        if not 0.0 < self.c < 1.0 or not 0.0 < self.beta < 1.0 or self.eta_max <= 0.0:
            raise ValueError("need 0 < c < 1, 0 < beta < 1, eta_max > 0")


@dataclass
class OptimizerConfig:
    delta: float = 0.02                      # rad, finite-difference probe
    step: FixedStep | ArmijoStep = field(default_factory=ArmijoStep)
    eps_cost: float = 0.05                   # mm^2, absolute convergence
    eps_delta: float = 1e-3                  # mm^2, successive-cost threshold
    max_updates: int = 100
    max_searches: int = 20000
    joint_limits: Mapping[str, tuple[float, float]] | None = field(
        default_factory=lambda: dict(DEFAULT_JOINT_LIMITS))

    def __post_init__(self):
        if self.delta <= 0.0 or self.eps_cost <= 0.0 or self.eps_delta <= 0.0:
            raise ValueError("delta and convergence thresholds must be positive")


@dataclass(frozen=True)
class UpdateTrace:
    """One optimizer update: the configuration reached, its sensed cost,
    the gradient estimate that produced it, the step size used and how many
    sensor searches it consumed. Update 0 is the starting observation."""

    update: int
    joints: JointVector
    cost: float
    gradient: np.ndarray | None
    eta: float
    searches: int


@dataclass
class TransitionRecord:
    objective: TransitionObjective
    updates: list[UpdateTrace]
    converged: bool
    mirrored: bool = False

    @property
    def final_joints(self) -> JointVector:
        return self.updates[-1].joints

    @property
    def final_cost(self) -> float:
        return self.updates[-1].cost

    def mirrored_copy(self) -> "TransitionRecord":
        updates = [UpdateTrace(u.update, mirror_joint_vector(u.joints), u.cost,
                               None, u.eta, 0) for u in self.updates]
        return TransitionRecord(mirror_transition(self.objective), updates,
                                self.converged, mirrored=True)


def estimate_gradient(world: SensorWorld, q: JointVector, objective,
                      weights: CostWeights | None, delta: float,
                      joint_limits: Mapping[str, tuple[float, float]] | None = None,
                      ) -> np.ndarray:
    """Central-difference gradient over the objective's active joints.

    Each joint is nudged +delta and -delta (two searches per joint); a
    probe that would cross a joint limit is shrunk one-sidedly so the pair
    stays feasible. The world is restored to q before returning. Sensing
    faults (insufficient load, fall) propagate to the caller.
    """
    limits = joint_limits or {}
    idx = q.active_indices(objective.active_joints)
    grad = np.zeros(len(idx))
    base = q.values
    try:
        for k, i in enumerate(idx):
            lo, hi = limits.get(q.names[i], (-np.inf, np.inf))
            up = min(base[i] + delta, hi)
            down = max(base[i] - delta, lo)
            if up - down <= 0.0:
                continue  # joint pinned; no usable probe direction
            probe = base.copy()
            probe[i] = up
            world.set_joints(q.with_values(probe))
            f_up = evaluate_cost(world.observe(), objective, weights)
            probe[i] = down
            world.set_joints(q.with_values(probe))
            f_down = evaluate_cost(world.observe(), objective, weights)
            grad[k] = (f_up - f_down) / (up - down)
    finally:
        world.set_joints(q)
    return grad


@dataclass(frozen=True)
class StepResult:
    joints: JointVector
    eta: float
    cost: float | None  # sensed cost at the new configuration, when known


def _apply_step(q: JointVector, gradient: np.ndarray, idx: np.ndarray, eta: float,
                limits) -> JointVector:
    values = q.values.copy()
    values[idx] -= eta * gradient
    return q.with_values(values).clamped(limits)


def gd_step(q: JointVector, gradient: np.ndarray, objective, config: OptimizerConfig,
            world: SensorWorld | None = None, weights: CostWeights | None = None,
            current_cost: float | None = None, eta_start: float | None = None,
            ) -> StepResult:
    """One descent update q <- q - eta * g on the active joints.

    Fixed mode needs no world access and leaves the world untouched. Armijo
    mode trials candidate steps on the world (one search each) and leaves
    the world at the accepted configuration; trials that make the robot
    fall count as rejected. Joint limits clamp, never error.
    """
    gradient = np.asarray(gradient, dtype=float)
    if not np.isfinite(gradient).all():
        raise ValueError("gradient must be finite")
    idx = q.active_indices(objective.active_joints)
    if isinstance(config.step, FixedStep):
        return StepResult(_apply_step(q, gradient, idx, config.step.eta,
                                      config.joint_limits), config.step.eta, None)

    step = config.step
    if world is None:
        raise ValueError("Armijo steps need world access for trial evaluations")
    if current_cost is None:
        current_cost = evaluate_cost(world.observe(), objective, weights)
    eta = step.eta_max if eta_start is None else min(eta_start, step.eta_max)
    if eta * float(np.abs(gradient).max(initial=0.0)) < 1e-15:
        return StepResult(q, 0.0, current_cost)  # stationary: stay put
    for _ in range(MAX_BACKTRACKS + 1):
        trial = _apply_step(q, gradient, idx, eta, config.joint_limits)
        moved = trial.values - q.values
        if float(np.abs(moved).max(initial=0.0)) > 0.0:
            try:
                world.set_joints(trial)
                f_trial = evaluate_cost(world.observe(), objective, weights)
            except (RobotFallError, InsufficientLoadError):
                f_trial = np.inf
            # Projected form of the sufficient-decrease test; identical to
            # f <= f0 - c*eta*|g|^2 when no limit clamps the step.
            if f_trial <= current_cost - (step.c / eta) * float(moved @ moved):
                return StepResult(trial, eta, f_trial)
        eta *= step.beta
    world.set_joints(q)
    raise LineSearchStallError(
        f"no sufficient-decrease step within {MAX_BACKTRACKS} backtracks")


def optimize_transition(world: SensorWorld, objective, weights: CostWeights | None,
                        config: OptimizerConfig, start: JointVector) -> TransitionRecord:
    """Run gradient descent until one transition objective is met.

    Stops when cost < eps_cost, when two consecutive updates differ by less
    than eps_delta, or when the update/search budget runs out. A budget
    exhausted with cost still above 10x eps_cost raises ConvergenceError
    carrying the partial record.
    """
    counter = QueryCounter(world)
    q = start.clamped(config.joint_limits)
    counter.set_joints(q)
    cost = evaluate_cost(counter.observe(), objective, weights)
    updates = [UpdateTrace(0, q, cost, None, 0.0, 1)]
    converged = cost < config.eps_cost
    eta_prev: float | None = None

    while not converged:
        if len(updates) - 1 >= config.max_updates or counter.observes >= config.max_searches:
            if cost > 10.0 * config.eps_cost:
                record = TransitionRecord(objective, updates, False)
                raise ConvergenceError(
                    f"transition {objective.index} ({objective.label}): cost "
                    f"{cost:.4g} after {len(updates) - 1} updates", record=record)
            break
        searches_before = counter.observes
        gradient = estimate_gradient(counter, q, objective, weights, config.delta,
                                     config.joint_limits)
        if isinstance(config.step, ArmijoStep):
            eta_start = None
            if eta_prev is not None and eta_prev > 0.0:
                eta_start = min(eta_prev / config.step.beta, config.step.eta_max)
            result = gd_step(q, gradient, objective, config, world=counter,
                             weights=weights, current_cost=cost, eta_start=eta_start)
            new_cost = result.cost
            if result.eta > 0.0:
                eta_prev = result.eta
        else:
            result = gd_step(q, gradient, objective, config)
            counter.set_joints(result.joints)
            new_cost = evaluate_cost(counter.observe(), objective, weights)
        q = result.joints
        updates.append(UpdateTrace(len(updates), q, new_cost, gradient, result.eta,
                                   counter.observes - searches_before))
        step_change = abs(new_cost - cost)
        cost = new_cost
        if cost < config.eps_cost:
            converged = True
        elif step_change < config.eps_delta:
            converged = True
    return TransitionRecord(objective, updates, converged)


def optimize_cycle(world: SensorWorld, cycle: GaitCycle,
                   weights: CostWeights | None = None,
                   config: OptimizerConfig | None = None,
                   start: JointVector | None = None) -> "TrajectoryLog":
    """Solve every transition of a cycle in order, then append the mirrored
    half obtained from the stored trajectories.

    Each transition starts from the previous solution. Per-objective
    weights in the cycle win over the global `weights`; the effective
    weights are stored in the log so replays recompute identical costs.
    Non-convergence aborts with the partial log attached to the error.
    """
    config = config or OptimizerConfig()
    q = start if start is not None else JointVector.zeros()
    records: list[TransitionRecord] = []
    for objective in cycle.transitions:
        effective = objective.weights if objective.weights is not None else (
            weights if weights is not None else CostWeights.default())
        objective = objective.with_weights(effective)
        _select_base(world, objective.base_side)
        try:
            record = optimize_transition(world, objective, effective, config, q)
        except ConvergenceError as err:
            if err.record is not None:
                records.append(err.record)
            raise ConvergenceError(str(err), record=err.record,
                                   log=TrajectoryLog(records, q.names)) from None
        records.append(record)
        q = record.final_joints
    mirrored = [record.mirrored_copy() for record in records]
    return TrajectoryLog(records + mirrored, q.names)


def _select_base(world, side: FrameId) -> None:
    setter = getattr(world, "set_base_side", None)
    if setter is not None:
        setter(side)


@dataclass
class TrajectoryLog:
    """Everything recorded while solving (and mirroring) a cycle."""

    transitions: list[TransitionRecord]
    joint_names: tuple[str, ...]

    def joint_sequence(self):
        """Yield (transition_number, record, trace) over all stored updates."""
        for number, record in enumerate(self.transitions, start=1):
            for trace in record.updates:
                yield number, record, trace

    def all_converged(self) -> bool:
        return all(r.converged for r in self.transitions)

    def save_jsonl(self, path) -> None:
        """One header line per transition, then one line per update:
        {transition, update, q, cost, grad, eta, searches}."""
        with open(path, "w") as fh:
            for number, record in enumerate(self.transitions, start=1):
                header = {"transition": number,
                          "objective": record.objective.to_json(),
                          "converged": record.converged,
                          "mirrored": record.mirrored}
                fh.write(json.dumps(header, sort_keys=True) + "\n")
                for u in record.updates:
                    line = {"transition": number,
                            "update": u.update,
                            "q": u.joints.as_dict(),
                            "cost": u.cost,
                            "grad": None if u.gradient is None else
                                    [float(v) for v in u.gradient],
                            "eta": u.eta,
                            "searches": u.searches}
                    fh.write(json.dumps(line, sort_keys=True) + "\n")

    @classmethod
    def load_jsonl(cls, path) -> "TrajectoryLog":
        records: list[TransitionRecord] = []
        joint_names: tuple[str, ...] = ()
        current: TransitionRecord | None = None
        with open(path) as fh:
            for raw in fh:
                data = json.loads(raw)
                if "update" not in data:
                    current = TransitionRecord(
                        TransitionObjective.from_json(data["objective"]), [],
                        bool(data["converged"]), bool(data["mirrored"]))
                    records.append(current)
                    continue
                if current is None:
                    raise TrajectoryFormatError("update line before any transition header")
                q = JointVector.from_dict(data["q"])
                joint_names = q.names
                grad = None if data["grad"] is None else np.asarray(data["grad"], dtype=float)
                current.updates.append(UpdateTrace(int(data["update"]), q,
                                                   float(data["cost"]), grad,
                                                   float(data["eta"]), int(data["searches"])))
        if not records or any(not r.updates for r in records):
            raise TrajectoryFormatError("trajectory log has a transition without updates")
        return cls(records, joint_names)

    def save_cost_csv(self, path) -> None:
        """Plot-ready (transition, update, cost) rows."""
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["transition", "update", "cost"])
            for number, _, trace in self.joint_sequence():
                writer.writerow([number, trace.update, repr(trace.cost)])


@dataclass(frozen=True)
class ReplaySample:
    transition: int
    update: int
    joints: JointVector
    observation: Observation
    cost: float


def replay(world: SensorWorld, log: TrajectoryLog) -> list[ReplaySample]:
    """Drive a world through every stored configuration and re-observe.

    Costs are evaluated against each transition's stored objective (which
    carries the weights used when solving), so replaying on the same world
    reproduces the logged costs.
    """
    samples = []
    for number, record, trace in log.joint_sequence():
        _select_base(world, record.objective.base_side)
        world.set_joints(trace.joints)
        obs = world.observe()
        cost = evaluate_cost(obs, record.objective)
        samples.append(ReplaySample(number, trace.update, trace.joints, obs, cost))
    return samples
