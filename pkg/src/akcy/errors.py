"""Exception types shared across the package."""


class AkcyError(Exception):
    """Base class for all package errors."""


class NonZeroMean(AkcyError):
    """Poisson right-hand side has a mean too large relative to its norm."""


class NonPositiveDensity(AkcyError):
    """A 4-form density that must be positive is <= 0 somewhere."""


class NotCompatible(AkcyError):
    """The candidate metric built from (omega, J) is not symmetric."""


class NotTaming(AkcyError):
    """omega(., J.) fails to be positive definite somewhere."""


class NotAlmostKahler(AkcyError):
    """An operation that assumes d omega = 0 received a non-closed form."""


class Degenerate(AkcyError):
    """A 2-form required to be nondegenerate is singular at some point."""


class InconsistentRHS(AkcyError):
    """Source term of an elliptic problem violates its solvability condition."""


class LinearSolveFailure(AkcyError):
    """An iterative linear solve did not reach its tolerance."""


class DimensionMismatch(AkcyError):
    """Numerical kernel dimension disagrees with the topological count."""


class LostPositivity(AkcyError):
    """A candidate symplectic form has non-positive square somewhere."""


class NewtonDivergence(AkcyError):
    """Newton iteration exhausted its iteration budget."""


class PathStalled(AkcyError):
    """Continuation step size underflowed its floor."""


class ScenarioInvalid(AkcyError):
    """Scenario construction produced data violating a structural invariant."""


class ConfigError(AkcyError):
    """Run configuration file is missing keys or has invalid values."""
