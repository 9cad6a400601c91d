"""Sensor-only quasi-static gait generation and load-cell self-calibration.

The package splits into a geometry/sensing substrate (frames, poses, CoP
from corner load cells), a gait planner emitting CoP/foot objectives, a
model-free gradient-descent optimizer that talks to any SensorWorld
through set_joints/observe only, a simulated biped implementing that
interface, and a calibration pipeline re-identifying the load-cell
parameters from replayed reference trajectories.
"""

from .calibration import (CalibResult, CalibWeights, ReferenceLog, SensorParams,
                          capture_reference, initial_guess, mae_cop, mae_grf,
                          nls_fit, paired_log, split_train_test)
from .cost import CostWeights, Observation, evaluate_cost
from .gait_plan import (GaitCycle, GaitParams, Support, TransitionObjective,
                        build_cycle, mirror_joint_trajectory, mirror_transition)
from .geometry import (EulerZYX, FootPose, FrameId, HomTransform, compose,
                       flatten_to_floating_base, foot_pose_in_floating_base, invert)
from .joints import (DEFAULT_JOINT_LIMITS, LEG_JOINT_NAMES, PITCH_JOINTS,
                     ROLL_JOINTS, JointVector, mirror_joint_vector)
from .optimizer import (ArmijoStep, FixedStep, OptimizerConfig, SensorWorld,
                        TrajectoryLog, TransitionRecord, UpdateTrace,
                        estimate_gradient, gd_step, optimize_cycle,
                        optimize_transition, replay)
from .sensing import (CellSample, CopReading, LoadCell, ShoeLayout, cell_force,
                      cop_from_forces, sensor_positions_in_base)
from .simbot import (ContactState, LinkSpec, SimRobot, SimWorld,
                     com_ground_projection, distribute_forces, forward_kinematics)

__version__ = "0.1.0"
