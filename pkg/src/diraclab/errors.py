"""Exception hierarchy shared by all diraclab modules."""


class DiracLabError(Exception):
    """Base class for every error raised by the package."""


class ConfigurationError(DiracLabError, ValueError):
    """Invalid geometry, weight family, solver option or config file."""


class ShapeError(DiracLabError, ValueError):
    """Fields, weights or matrices that do not live on the same grid."""


class DomainError(DiracLabError, ValueError):
    """A weight that is not Hermitian positive definite where it must be."""


class NumericError(DiracLabError, ArithmeticError):
    """Factorization failure, rank deficiency or unresolved kernel gap."""


class TruncationError(NumericError):
    """Requested more eigenpairs than the reliable spectral window holds."""

    def __init__(self, message: str, reliable_k_max: int):
        super().__init__(message)
        self.reliable_k_max = reliable_k_max


class RangeError(DiracLabError, IndexError):
    """Missing eigen-index, cluster label or insufficient retained spectrum."""


class PreconditionError(DiracLabError, ValueError):
    """Inputs violate a hypothesis of the property being checked."""


class NearKernelError(DiracLabError, ValueError):
    """Dual Rayleigh quotient requested for a (numerically) harmonic spinor."""


class TruncationWarning(UserWarning):
    """A field has a non-negligible component outside the retained span."""
