"""Exception types shared across the toolkit."""


class CopwalkError(Exception):
    """Base class for all copwalk errors."""


class FrameChainError(CopwalkError):
    """Two transforms or poses were combined across mismatched frames."""


class GimbalLockError(CopwalkError):
    """Pitch angle too close to +/-pi/2 for a unique ZYX decomposition."""


class InsufficientLoadError(CopwalkError):
    """Total measured ground force below the usable threshold."""


class RobotFallError(CopwalkError):
    """Center of pressure left the support polygon (quasi-static tip-over)."""


class InfeasibleObjectiveError(CopwalkError):
    """A planned CoP target falls outside its support polygon."""


class TrajectoryFormatError(CopwalkError):
    """Joint trajectory channels do not match what an operation expects."""


class LineSearchStallError(CopwalkError):
    """Backtracking line search exhausted its budget without a usable step."""


class ConvergenceError(CopwalkError):
    """Optimization ran out of budget far from the objective.

    Carries the partial trace so callers can persist what was solved.
    """

    def __init__(self, message, record=None, log=None):
        super().__init__(message)
        self.record = record
        self.log = log


class DegenerateDataError(CopwalkError):
    """Calibration data cannot determine the requested parameters."""


class FitFailedError(CopwalkError):
    """Least-squares fit aborted; best parameters so far are attached."""

    def __init__(self, message, result=None):
        super().__init__(message)
        self.result = result
