"""Exceptions raised by magcal."""
import numpy as np


class MagcalError(Exception):
    """Base class of all magcal errors."""


class SingularMatrixError(MagcalError, np.linalg.LinAlgError):
    """A matrix that must be inverted is (numerically) singular."""


class DegenerateError(MagcalError):
    """Input is degenerate, e.g. a zero-norm vector or rank-1 matrix."""


class RankDeficiencyError(MagcalError):
    """A Gramian has more than one vanishing eigenvalue."""


class IndefiniteError(MagcalError):
    """A recovered quadratic form is not positive definite."""


class ProfileError(MagcalError):
    """Invalid motion profile or disturbance segment."""


class NonFiniteError(MagcalError, ValueError):
    """NaN or Inf among the inputs of a filter step."""


class DatasetError(MagcalError):
    """Problem with a dataset file or a window within a stream."""

    def __init__(self, message, line=None):
        if line is not None:
            message = "line {}: {}".format(line, message)
        super().__init__(message)
        self.line = line


class ConfigError(MagcalError):
    """Invalid or incomplete run configuration."""


class UnobservableError(MagcalError):
    """Calibration aborted because the data does not excite the parameters."""
