"""Exception hierarchy shared by all ergoselect modules."""

from __future__ import annotations


class ErgoselectError(Exception):
    """Base class for every error raised by this package."""


class IncompatibleGridError(ErgoselectError, ValueError):
    """Two fields live on different grids or have mismatched buffers."""


class AliasingError(ErgoselectError, ValueError):
    """Requested Fourier mode cannot be resolved on the grid."""


class AssumptionViolation(ErgoselectError, ValueError):
    """A structural hypothesis on the model data fails.

    ``clause`` names the failing condition, e.g. ``"negative-diffusion"``.
    """

    def __init__(self, clause: str, message: str = ""):
        self.clause = clause
        super().__init__(f"{clause}: {message}" if message else clause)


class NonConvergenceError(ErgoselectError, RuntimeError):
    """Nonlinear solve did not reach the tolerance; ``report`` holds the best iterate."""

    def __init__(self, message: str, report=None):
        self.report = report
        super().__init__(message)


class MonotonicityViolation(ErgoselectError, RuntimeError):
    """Assembled Jacobian is not an M-matrix (scheme bug)."""


class NegativityViolation(ErgoselectError, RuntimeError):
    """Adjoint density has entries below the nonnegativity tolerance."""


class SingularSystemError(ErgoselectError, RuntimeError):
    pass


class PeriodInsufficiencyError(ErgoselectError, ValueError):
    """Convolution parameter too large for three-period tiling to be exact."""


class UnnormalizableError(ErgoselectError, ValueError):
    pass


class EmptyClassError(ErgoselectError, RuntimeError):
    """No shifted oracle representative satisfies the sampled constraints."""


class FamilyDegenerateError(ErgoselectError, ValueError):
    pass


class ConfigError(ErgoselectError, ValueError):
    """Invalid run configuration (maps to CLI exit code 2)."""
