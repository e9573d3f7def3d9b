"""Exception hierarchy for the package.

Everything raised deliberately derives from :class:`MFCokrigError` so callers
(and the command line front end) can distinguish our failures from plain bugs.
"""


class MFCokrigError(Exception):
    """Base class for all errors raised by this package."""


class ShapeError(MFCokrigError):
    """Array arguments have inconsistent or unexpected dimensions."""


class InvalidHyperparameterError(MFCokrigError):
    """A kernel hyperparameter is out of its admissible range."""


class IllConditionedError(MFCokrigError):
    """A correlation matrix could not be factorized, even after diagonal
    inflation up to the allowed ceiling.

    Attributes
    ----------
    nugget : float
        The last (largest) diagonal inflation that was attempted.
    """

    def __init__(self, message, nugget=None):
        super().__init__(message)
        self.nugget = nugget


class SingularSystemError(MFCokrigError):
    """A regression system is rank deficient (collinear trend columns)."""


class InsufficientDataError(MFCokrigError):
    """Too few observations for the requested estimation."""


class DegeneratePosteriorError(MFCokrigError):
    """A posterior quantity is undefined (non-positive shape parameter)."""


class NestingError(MFCokrigError):
    """Designs violate the required nesting, or linked observations disagree."""


class OptimizationError(MFCokrigError):
    """Hyperparameter search failed to produce any usable candidate."""


class DataFormatError(MFCokrigError):
    """A data or configuration file could not be parsed or failed validation."""


class DesignError(MFCokrigError):
    """A design request is infeasible (sizes, bounds, or method)."""


class MetricError(MFCokrigError):
    """A quality metric is undefined for the supplied data."""
