"""Load-cell self-calibration from replayed reference trajectories.

While the shoe sensors are known-good, a solved trajectory is replayed and
the measured CoP, total ground force and per-cell forces are stored as
reference data. After the cells drift, the same trajectory is replayed
again, this time recording raw voltages, and the eight affine (gain,
offset) pairs are re-identified by damped nonlinear least squares against
the stored references. A linear regression on the CoP-moment balance
provides the shared initial guess.
"""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateDataError, FitFailedError
from .sensing import ShoeLayout


@dataclass(frozen=True, eq=False)
class SensorParams:
    """The 8 affine pairs (gain a_i, offset b_i), one per load cell."""

    gains: np.ndarray
    offsets: np.ndarray

    def __post_init__(self):
        g = np.array(self.gains, dtype=float).reshape(8)
        b = np.array(self.offsets, dtype=float).reshape(8)
        if (g == 0.0).any():
            raise ValueError("zero gain means a dead cell")
        g.flags.writeable = False
        b.flags.writeable = False
        object.__setattr__(self, "gains", g)
        object.__setattr__(self, "offsets", b)

    @classmethod
    def uniform(cls, gain: float, offset: float) -> "SensorParams":
        return cls(np.full(8, float(gain)), np.full(8, float(offset)))

    @classmethod
    def from_layout(cls, layout: ShoeLayout) -> "SensorParams":
        cells = layout.all_cells
        return cls(np.array([c.gain for c in cells]), np.array([c.offset for c in cells]))

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.gains, self.offsets])

    @classmethod
    def from_vector(cls, x: np.ndarray) -> "SensorParams":
        x = np.asarray(x, dtype=float).reshape(16)
        return cls(x[:8], x[8:])

    def drifted(self, rng: np.random.Generator, gain_low: float = 0.8,
                gain_high: float = 1.2, offset_span: float = 0.5) -> "SensorParams":
        """Multiplicative gain drift and additive offset drift, per cell."""
        return SensorParams(self.gains * rng.uniform(gain_low, gain_high, 8),
                            self.offsets + rng.uniform(-offset_span, offset_span, 8))

    def to_json(self) -> dict:
        return {"gains": [float(v) for v in self.gains],
                "offsets": [float(v) for v in self.offsets]}

    @classmethod
    def from_json(cls, data: dict) -> "SensorParams":
        return cls(np.asarray(data["gains"], dtype=float),
                   np.asarray(data["offsets"], dtype=float))


@dataclass(frozen=True)
class CalibWeights:
    """Term weights for the identification objective: total force, CoP,
    per-cell force."""

    grf: float = 1.0   # N^-2
    cop: float = 1.0   # mm^-2
    cell: float = 1.0  # N^-2

    def __post_init__(self):
        if self.grf < 0.0 or self.cop < 0.0 or self.cell < 0.0:
            raise ValueError("weights must be non-negative")
        if self.grf == 0.0 and self.cop == 0.0 and self.cell == 0.0:
            raise ValueError("at least one weight must be positive")


@dataclass
class ReferenceLog:
    """Per-sample record of one replay.

    voltages: (N, 8) raw cell voltages (V)
    grf:      (N,)   reference total normal force (N)
    cop:      (N, 2) reference CoP (mm, floating base)
    forces:   (N, 8) reference per-cell forces (N)
    positions:(N, 8, 2) cell positions (mm, floating base, from the camera)
    """

    voltages: np.ndarray
    grf: np.ndarray
    cop: np.ndarray
    forces: np.ndarray
    positions: np.ndarray

    def __post_init__(self):
        n = len(self.voltages)
        self.voltages = np.asarray(self.voltages, dtype=float).reshape(n, 8)
        self.grf = np.asarray(self.grf, dtype=float).reshape(n)
        self.cop = np.asarray(self.cop, dtype=float).reshape(n, 2)
        self.forces = np.asarray(self.forces, dtype=float).reshape(n, 8)
        self.positions = np.asarray(self.positions, dtype=float).reshape(n, 8, 2)
        if not np.isfinite(self.positions).all():
            raise DegenerateDataError("non-finite cell positions in reference log")

    def __len__(self):
        return len(self.grf)

    def require_samples(self, minimum: int = 2) -> None:
        if len(self) < minimum:
            raise DegenerateDataError(
                f"need at least {minimum} samples, got {len(self)}")

    def slice(self, start: int, stop: int) -> "ReferenceLog":
        return ReferenceLog(self.voltages[start:stop], self.grf[start:stop],
                            self.cop[start:stop], self.forces[start:stop],
                            self.positions[start:stop])

    def save_jsonl(self, path) -> None:
        with open(path, "w") as fh:
            for k in range(len(self)):
                line = {"voltages": self.voltages[k].tolist(),
                        "grf": float(self.grf[k]),
                        "cop": self.cop[k].tolist(),
                        "forces": self.forces[k].tolist(),
                        "positions": self.positions[k].tolist()}
                fh.write(json.dumps(line, sort_keys=True) + "\n")

    @classmethod
    def load_jsonl(cls, path) -> "ReferenceLog":
        volts, grf, cop, forces, pos = [], [], [], [], []
        with open(path) as fh:
            for raw in fh:
                data = json.loads(raw)
                volts.append(data["voltages"])
                grf.append(data["grf"])
                cop.append(data["cop"])
                forces.append(data["forces"])
                pos.append(data["positions"])
        if not volts:
            raise DegenerateDataError(f"empty reference log {path}")
        return cls(np.array(volts), np.array(grf), np.array(cop),
                   np.array(forces), np.array(pos))


def capture_reference(world, trajectory) -> ReferenceLog:
    """Replay a trajectory log and record what the shoes measure.

    The world must expose raw_voltages/cell_positions/reported_cell_forces
    on top of the usual set_joints/observe (the simulated world does; a
    hardware bridge would too). Captured on a world with accurate sensors
    this is reference ground truth; captured after the cells drift it
    supplies the current raw voltages for identification.
    """
    volts, grf, cop, forces, positions = [], [], [], [], []
    for _, record, trace in trajectory.joint_sequence():
        setter = getattr(world, "set_base_side", None)
        if setter is not None:
            setter(record.objective.base_side)
        world.set_joints(trace.joints)
        obs = world.observe()
        volts.append(world.raw_voltages())
        grf.append(obs.cop.grf)
        cop.append(obs.cop.cop)
        forces.append(world.reported_cell_forces())
        positions.append(world.cell_positions())
    if len(volts) < 2:
        raise DegenerateDataError(f"trajectory yields {len(volts)} samples, need >= 2")
    return ReferenceLog(np.array(volts), np.array(grf), np.array(cop),
                        np.array(forces), np.array(positions))


def paired_log(reference: ReferenceLog, current: ReferenceLog) -> ReferenceLog:
    """Fit input: reference targets paired with the current replay's raw
    voltages and camera cell positions, sample by sample."""
    if len(reference) != len(current):
        raise DegenerateDataError(
            f"reference has {len(reference)} samples, current replay {len(current)}")
    return ReferenceLog(current.voltages, reference.grf, reference.cop,
                        reference.forces, current.positions)


def predict_measurements(log: ReferenceLog, params: SensorParams
                         ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Recompute (grf, cop, per-cell forces) from raw voltages under
    candidate parameters: f = a*S + b per cell, then the weighted-centroid
    CoP. No clamping here; the fit needs a smooth model around zero force."""
    f = log.voltages * params.gains + params.offsets
    n = f.sum(axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        c = (f[:, :, None] * log.positions).sum(axis=1) / n[:, None]
    return n, c, f


def initial_guess(log: ReferenceLog, include_grf_rows: bool = False
                  ) -> tuple[float, float]:
    """Shared (a0, b0) for all 8 cells by linear least squares.

    Multiplying the CoP equation through by the total force makes it
    linear in (a0, b0): cop_ref * grf_ref ~= a0 * sum_i S_i p_i
    + b0 * sum_i p_i, two rows per sample. `include_grf_rows` appends the
    optional per-sample total-force row grf_ref ~= a0 * sum_i S_i + 8*b0.
    """
    log.require_samples(2)
    sum_sp = (log.voltages[:, :, None] * log.positions).sum(axis=1)  # (N, 2)
    sum_p = log.positions.sum(axis=1)                                # (N, 2)
    rows = [np.stack([sum_sp.reshape(-1), sum_p.reshape(-1)], axis=1)]
    rhs = [(log.cop * log.grf[:, None]).reshape(-1)]
    if include_grf_rows:
        rows.append(np.stack([log.voltages.sum(axis=1), np.full(len(log), 8.0)], axis=1))
        rhs.append(log.grf)
    a_mat = np.vstack(rows)
    b_vec = np.concatenate(rhs)

    per_sample = np.column_stack([sum_sp, sum_p, log.cop, log.grf[:, None]])
    if len(np.unique(np.round(per_sample, 9), axis=0)) < 2:
        raise DegenerateDataError("all samples identical; CoP must vary across the log")
    solution, _, rank, _ = np.linalg.lstsq(a_mat, b_vec, rcond=None)
    if rank < 2:
        raise DegenerateDataError("stacked regression matrix is rank-deficient")
    return float(solution[0]), float(solution[1])


def mae_grf(current: np.ndarray, reference: np.ndarray) -> float:
    """Mean absolute total-force error over a series (N)."""
    current = np.asarray(current, dtype=float).reshape(-1)
    reference = np.asarray(reference, dtype=float).reshape(-1)
    if len(current) != len(reference):
        raise ValueError(f"length mismatch: {len(current)} vs {len(reference)}")
    if len(current) == 0:
        raise ValueError("need at least one sample")
    return float(np.abs(current - reference).mean())


def mae_cop(current: np.ndarray, reference: np.ndarray) -> float:
    """Mean Euclidean CoP error over a series (mm)."""
    current = np.asarray(current, dtype=float).reshape(-1, 2)
    reference = np.asarray(reference, dtype=float).reshape(-1, 2)
    if len(current) != len(reference):
        raise ValueError(f"length mismatch: {len(current)} vs {len(reference)}")
    if len(current) == 0:
        raise ValueError("need at least one sample")
    return float(np.linalg.norm(current - reference, axis=1).mean())


def split_train_test(log: ReferenceLog, ratio: float = 0.7
                     ) -> tuple[ReferenceLog, ReferenceLog]:
    """Contiguous time split: the first ratio*N samples train, the rest test."""
    if not 0.0 < ratio < 1.0:
        raise ValueError(f"ratio must be in (0, 1), got {ratio}")
    n_train = int(ratio * len(log) + 1e-9)
    if n_train < 2:
        raise DegenerateDataError(f"split leaves {n_train} training samples, need >= 2")
    if n_train >= len(log):
        raise DegenerateDataError("split leaves no test samples")
    return log.slice(0, n_train), log.slice(n_train, len(log))


@dataclass
class NlsOptions:
    max_iterations: int = 200
    rel_tol: float = 1e-10
    damping: float = 1e-3
    damping_up: float = 10.0
    damping_down: float = 0.3
    damping_max: float = 1e10
    train_ratio: float = 0.7
    jacobian_step: float = 1e-6


@dataclass
class CalibResult:
    params: SensorParams
    initial: SensorParams
    mae: dict
    iterations: list
    objective_initial: float
    objective_final: float
    jacobian_rank: int

    @property
    def degenerate_directions(self) -> int:
        return 16 - self.jacobian_rank

    def to_json(self) -> dict:
        return {"params": self.params.to_json(),
                "init": self.initial.to_json(),
                "mae": self.mae,
                "iters": [[int(i), float(j), float(lam)] for i, j, lam in self.iterations],
                "objective": {"initial": self.objective_initial,
                              "final": self.objective_final},
                "jacobian_rank": self.jacobian_rank,
                "degenerate_directions": self.degenerate_directions}

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_json(), fh, indent=2, sort_keys=True)


def _residuals(log: ReferenceLog, params: SensorParams, weights: CalibWeights
               ) -> np.ndarray:
    """Per sample: [sqrt(w_n)*(n - n_ref), sqrt(w_c)*(c - c_ref) (2 rows),
    sqrt(w_f)*(f - f_ref) (8 rows)], concatenated over samples."""
    n, c, f = predict_measurements(log, params)
    blocks = np.concatenate([
        np.sqrt(weights.grf) * (n - log.grf)[:, None],
        np.sqrt(weights.cop) * (c - log.cop),
        np.sqrt(weights.cell) * (f - log.forces),
    ], axis=1)
    return blocks.reshape(-1)


def _jacobian(log: ReferenceLog, x: np.ndarray, r0: np.ndarray,
              weights: CalibWeights, step: float) -> np.ndarray:
    jac = np.empty((len(r0), len(x)))
    for j in range(len(x)):
        h = step * max(1.0, abs(x[j]))
        xp = x.copy()
        xp[j] += h
        jac[:, j] = (_residuals(log, SensorParams.from_vector(xp), weights) - r0) / h
    return jac


def _mae_pair(log: ReferenceLog, params: SensorParams) -> tuple[float, float]:
    n, c, _ = predict_measurements(log, params)
    return mae_grf(n, log.grf), mae_cop(c, log.cop)


def nls_fit(log: ReferenceLog, init: SensorParams,
            weights: CalibWeights | None = None,
            options: NlsOptions | None = None) -> CalibResult:
    """Identify all 8 (gain, offset) pairs by damped least squares.

    Fits on the training portion of a contiguous time split; the residual
    Jacobian comes from forward differences. Damping goes up whenever a
    trial step would increase the objective and comes back down on
    success, so the training objective never increases across accepted
    iterations. Stops on relative objective change < rel_tol or after
    max_iterations. Runaway damping raises FitFailedError with the best
    result so far attached.
    """
    weights = weights or CalibWeights()
    options = options or NlsOptions()
    log.require_samples(3)
    train, test = split_train_test(log, options.train_ratio)

    x = init.as_vector().copy()
    r = _residuals(train, SensorParams.from_vector(x), weights)
    objective = float(r @ r)
    objective_initial = objective
    lam = options.damping
    iterations: list[tuple[int, float, float]] = [(0, objective, lam)]
    jac = None

    def build_result(final_x: np.ndarray, final_jac) -> CalibResult:
        fitted = SensorParams.from_vector(final_x)
        mae = {"grf": {}, "cop": {}}
        for split_name, split_log in (("train", train), ("test", test)):
            pre_n, pre_c = _mae_pair(split_log, init)
            post_n, post_c = _mae_pair(split_log, fitted)
            mae["grf"].setdefault("pre", {})[split_name] = pre_n
            mae["grf"].setdefault("post", {})[split_name] = post_n
            mae["cop"].setdefault("pre", {})[split_name] = pre_c
            mae["cop"].setdefault("post", {})[split_name] = post_c
        if final_jac is None:
            final_jac = _jacobian(train, final_x,
                                  _residuals(train, fitted, weights),
                                  weights, options.jacobian_step)
        singular = np.linalg.svd(final_jac, compute_uv=False)
        rank = int((singular > singular.max() * 1e-8).sum()) if singular.size else 0
        return CalibResult(fitted, init, mae, iterations, objective_initial,
                           objective, rank)

    for iteration in range(1, options.max_iterations + 1):
        jac = _jacobian(train, x, r, weights, options.jacobian_step)
        gradient = jac.T @ r
        hessian = jac.T @ jac
        scale = np.diag(hessian).copy()
        scale[scale < 1e-12] = 1e-12
        while True:
            try:
                step = np.linalg.solve(hessian + lam * np.diag(scale), -gradient)
            except np.linalg.LinAlgError:
                step = None
            x_try = x + step if step is not None else None
            trial_ok = x_try is not None and np.abs(x_try[:8]).min() > 1e-12
            if trial_ok:
                r_try = _residuals(train, SensorParams.from_vector(x_try), weights)
                objective_try = float(r_try @ r_try)
                trial_ok = np.isfinite(objective_try) and objective_try < objective
            if trial_ok:
                x, r = x_try, r_try
                previous = objective
                objective = objective_try
                lam = max(lam * options.damping_down, 1e-14)
                break
            lam *= options.damping_up
            if lam > options.damping_max:
                raise FitFailedError("damping overflow; objective stopped improving",
                                     result=build_result(x, jac))
        iterations.append((iteration, objective, lam))
        if (previous - objective) <= options.rel_tol * max(previous, 1e-300):
            break
    return build_result(x, jac)
