"""Exception hierarchy shared by every module.

The CLI maps these onto distinct exit codes, so new failure modes should
subclass one of the three roots below rather than raising bare ValueError.
"""


class UdnCompError(Exception):
    """Root of all package errors."""


class ConfigError(UdnCompError, ValueError):
    """Scenario file could not be parsed or violates a model invariant."""


class ParameterError(UdnCompError, ValueError):
    """Argument outside the documented domain of a numerical routine."""


class NumericError(UdnCompError, ArithmeticError):
    """A numerical stage failed (quadrature, root finding, truncation, ...)."""


class ConvergenceError(NumericError):
    def __init__(self, message, estimate=None, error_bound=None):
        super().__init__(message)
        self.estimate = estimate
        self.error_bound = error_bound


class BracketError(NumericError):
    pass


class TruncationError(NumericError):
    def __init__(self, message, achieved_mass=None):
        super().__init__(message)
        self.achieved_mass = achieved_mass


class CapacityError(NumericError):
    """Requested realization would exceed the configured memory cap."""


class CalibrationError(NumericError):
    pass


class DegenerateApproximationError(NumericError):
    """Gamma moment matching hit a non-positive variance."""
