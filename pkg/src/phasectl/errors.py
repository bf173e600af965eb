"""Exception hierarchy shared across the toolkit.

Configuration problems (bad parameters, malformed files, unknown keys) map
to CLI exit code 2; numerical failures (blowup, singular solves, stalled
optimization) map to exit code 3.
"""


class PhasectlError(Exception):
    """Base class for all toolkit errors."""


class ConfigurationError(PhasectlError):
    """Invalid parameter combination, option value, or configuration key."""


class FieldFormatError(ConfigurationError):
    """Malformed field/control/model file; message carries byte or line position."""


class NumericalBlowupError(PhasectlError):
    """A stepper or rollout produced a non-finite value.

    Attributes carry the first offending location so failures are traceable.
    """

    def __init__(self, message, cell=None, timestep=None):
        super().__init__(message)
        self.cell = cell
        self.timestep = timestep


class EstimationError(PhasectlError):
    """Jacobian estimation failed (singular Gram matrix, too few samples)."""


class IdentificationError(PhasectlError):
    """LTV system identification failed (rank-deficient regressor)."""


class OptimizationStalledError(PhasectlError):
    """Trajectory optimizer made no accepted progress within its budget."""

    def __init__(self, message, cost_history=None):
        super().__init__(message)
        self.cost_history = list(cost_history) if cost_history is not None else []


class RiccatiError(PhasectlError):
    """Riccati recursion hit a non-positive-definite solve block."""

    def __init__(self, message, timestep=None):
        super().__init__(message)
        self.timestep = timestep
