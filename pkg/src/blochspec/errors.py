"""Exception and warning types shared across the toolkit."""


class BlochspecError(Exception):
    """Base class for all toolkit errors."""


class ConfigInvalid(BlochspecError):
    """A run configuration or operator document violates its schema.

    ``path`` names the offending field, e.g. ``"K_branch"`` or ``"P.2[0]"``.
    """

    def __init__(self, path, message):
        self.path = path
        super().__init__(f"{path}: {message}")


class DegenerateMeanMatrix(BlochspecError):
    """The mean coupling matrix has a (nearly) multiple eigenvalue.

    The asymptotic machinery assumes simple eigenvalues; callers may pass
    ``force=True`` to proceed anyway.
    """


class TruncationTooSmall(BlochspecError):
    """Galerkin truncation radius smaller than the coefficient bandwidth."""


class EigensolverFailure(BlochspecError):
    """Dense eigensolver did not converge."""


class IntegratorStall(BlochspecError):
    """ODE integrator step size underflow (typically |lambda| too large for tol)."""


class NoZerosFound(BlochspecError):
    """Degeneracy scan found no multiple eigenvalues (often legitimate)."""


class RefinementDiverged(BlochspecError):
    """A candidate zero could not be polished to tolerance."""


class InsufficientRange(BlochspecError):
    """Too few k values for a meaningful asymptotic fit."""


class FlaggedPair(BlochspecError):
    """Operation on an eigenpair whose alpha is numerically zero."""


class PoorFit(BlochspecError):
    """Blow-up exponent regression with R^2 below threshold."""


class NonIntegrableBranch(BlochspecError):
    """Quadrature ladder for a branch integral diverged."""


class HuddleDiverged(BlochspecError):
    """The shrinking-window integral sequence failed its Cauchy test."""

    def __init__(self, message, sequence=None):
        self.sequence = sequence
        super().__init__(message)


class AmbiguousContinuation(BlochspecError):
    """Branch continuation could not disambiguate two candidates."""


class DefectiveEigenvalueWarning(UserWarning):
    """An eigenpair's left/right overlap is below the alpha floor."""
