"""Exception hierarchy shared by all modules."""


class BeltramiLabError(Exception):
    """Base class for every error raised by the package."""


class ConfigurationError(BeltramiLabError, ValueError):
    """Invalid grid, mismatched grids or malformed scenario input."""


class DomainError(BeltramiLabError, ValueError):
    """A disk or test-function support leaves the computational cell."""


class EllipticityError(BeltramiLabError, ValueError):
    """Coefficients violate the ellipticity bound k < 1."""


class ConvergenceError(BeltramiLabError, RuntimeError):
    """Fixed-point iteration did not reach tolerance."""

    def __init__(self, message, residual=None, iterations=None):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


class SamplingError(BeltramiLabError, RuntimeError):
    """Random pair sampling could not avoid coincident values."""


class DegeneracyError(BeltramiLabError, RuntimeError):
    """The Jacobian of a mapping vanishes on too many samples."""


class DegenerateInputError(BeltramiLabError, ValueError):
    """Every requested disk was skipped; nothing to measure."""


class HypothesisError(BeltramiLabError, ValueError):
    """Input violates a sign or positivity hypothesis of an operation."""
