"""Intermittent and continuous negative measurements of diffusing and
quantum particles: solvers, Monte Carlo estimators and post-measurement
wave-function comparisons."""
from importlib.metadata import PackageNotFoundError, version

try:
    __version__ = version("artifact")
except PackageNotFoundError:  # running from a source tree
    __version__ = "0.0.0"

from .grid import (  # noqa: E402
    DENSITY,
    WAVEFUNCTION,
    DomainSpec,
    Grid1D,
    ObservationSchedule,
    ScalarField,
    Trajectory,
)
from .errors import (  # noqa: E402
    AccuracyError,
    DegenerateConditioningError,
    DomainError,
    EnsembleCollapseError,
    InsufficientDataError,
    InsufficientPrecisionError,
    SchemeConsistencyError,
    SupportGuardError,
)

__all__ = [
    "__version__", "DENSITY", "WAVEFUNCTION", "DomainSpec", "Grid1D", "ObservationSchedule",
    "ScalarField", "Trajectory", "AccuracyError", "DegenerateConditioningError", "DomainError",
    "EnsembleCollapseError", "InsufficientDataError", "InsufficientPrecisionError",
    "SchemeConsistencyError", "SupportGuardError",
]
