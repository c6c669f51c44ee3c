"""Exception hierarchy.

Numerical failures derive from :class:`NumericalError` so the CLI can map them
to a dedicated exit code.
"""


class LevyCodebookError(Exception):
    """Base class for all package errors."""


class SpecError(LevyCodebookError, ValueError):
    """A Levy triplet, jump spec or parameter set is rejected."""


class StripDomainError(LevyCodebookError, ValueError):
    """An exponent was evaluated outside its declared complex strip."""


class OutOfRangeError(LevyCodebookError, ValueError):
    """A maturity, frequency or strike lies outside the grid."""


class AlignmentError(LevyCodebookError, ValueError):
    """A time is not aligned with the maturity grid."""


class DataError(LevyCodebookError, ValueError):
    """Input price data violate basic bounds."""


class ConfigError(LevyCodebookError, ValueError):
    """Run configuration is malformed or fails schema validation."""


class NumericalError(LevyCodebookError, ArithmeticError):
    """Base class for numerical failures."""


class PiViolationError(NumericalError):
    """A cumulant fails the necessary conditions for membership in Pi."""


class ResolutionError(NumericalError):
    """Fourier inversion did not resolve the target (edge decay or clipping)."""


class BranchError(NumericalError):
    """Complex logarithm branch could not be tracked continuously."""

    def __init__(self, message, T=None, u=None):
        super().__init__(message)
        self.T = T
        self.u = u


class NonConvergenceError(NumericalError):
    """Fixed-point iteration exceeded its iteration budget."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class StepSizeError(NumericalError):
    """Integrator step size underflow."""
