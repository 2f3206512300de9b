"""Exception hierarchy shared by the solvers and the CLI."""


class CollapseLabError(Exception):
    """Base class for every error raised by the package."""


class DomainError(CollapseLabError, ValueError):
    """A region, boundary point or stencil does not fit the grid."""


class DegenerateConditioningError(CollapseLabError, ArithmeticError):
    """Conditioning on survival divides by (numerically) zero mass."""


class SchemeConsistencyError(CollapseLabError, ArithmeticError):
    """A solver invariant drifted beyond its tolerance."""


class SupportGuardError(CollapseLabError, RuntimeError):
    """Mass reached the artificial walls of a truncated box."""


class EnsembleCollapseError(CollapseLabError, RuntimeError):
    """Every walker left the domain within one step."""


class InsufficientDataError(CollapseLabError, ValueError):
    """Not enough samples to form the requested estimate."""


class AccuracyError(CollapseLabError, ArithmeticError):
    """A quadrature did not reach its requested tolerance."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class InsufficientPrecisionError(CollapseLabError, ArithmeticError):
    """A measured quantity fell below the numerical noise floor."""


# exit code families used by the CLI
NUMERICAL_GUARDS = (SupportGuardError, EnsembleCollapseError)
