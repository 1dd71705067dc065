"""Exception types shared across the toolkit."""


class ResolutionError(ValueError):
    """A sample grid is too coarse to resolve the requested waveform."""


class EmptyWindowError(ValueError):
    """Readout intervals cover the whole trace; no background remains."""


class SingularWindowError(ValueError):
    """Mode and background window are (numerically) colinear."""


class GridMismatchError(ValueError):
    """Traces, mode, and window do not share one sample grid."""


class ConvergenceError(RuntimeError):
    """An iterative fit hit its iteration cap; carries the best result seen."""

    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best


class EmptyDatasetError(RuntimeError):
    """Post-selection discarded every trial."""


class DataError(ValueError):
    """A dataset contains non-finite or otherwise unusable values."""


class PairingError(ValueError):
    """Photon and control measurement sets cannot be paired up."""


class FitError(RuntimeError):
    """A parameter fit failed to converge or returned an invalid optimum."""


class ConditioningError(RuntimeError):
    """Regression inputs are degenerate (no spread in the regressor)."""


class UnderdeterminedError(ValueError):
    """Fewer data points than free parameters."""


class ConfigError(ValueError):
    """Configuration violates the documented schema.

    ``field_path`` points at the offending entry, e.g. ``chain.isolation_l``.
    """

    def __init__(self, field_path, message):
        super().__init__(f"{field_path}: {message}")
        self.field_path = field_path
