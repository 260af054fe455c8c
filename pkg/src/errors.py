"""
Exception hierarchy shared by the library and the CLI.

Library modules raise these; only run_gigg.py maps them to exit codes.
"""


class GiggError(Exception):
    """Base class for every error raised by this package."""


class ParameterDomainError(GiggError, ValueError):
    """Parameters outside the domain of a density, sampler or formula."""


class NumericError(GiggError, ArithmeticError):
    """An iterative or numerical procedure failed to reach its tolerance.

    Attributes:
        achieved: the achieved error estimate or the last iterate.
    """

    def __init__(self, message: str, achieved=None):
        super().__init__(message)
        self.achieved = achieved


class FactorizationError(NumericError):
    """Cholesky factorization failed at a given (1-based) pivot."""

    def __init__(self, what: str, pivot: int):
        super().__init__(
            f"{what} is not positive definite (failed at pivot {pivot})",
            achieved=pivot,
        )
        self.what = what
        self.pivot = pivot


class SamplerError(NumericError):
    """A Gibbs sub-update failed; carries the sweep index."""

    def __init__(self, sweep: int, cause: Exception):
        super().__init__(f"sweep {sweep}: {cause}", achieved=getattr(cause, "achieved", None))
        self.sweep = sweep
        self.cause = cause


class DegenerateChainError(GiggError, ValueError):
    """Chains with zero variance, for which PSRF/ESS are undefined."""


class CalibrationError(GiggError, ValueError):
    """A calibration target cannot be met.

    Attributes:
        achievable: (low, high) range that can be reached, when known.
    """

    def __init__(self, message: str, achievable: tuple[float, float] | None = None):
        super().__init__(message)
        self.achievable = achievable


class ScenarioError(GiggError, ValueError):
    """Invalid simulation scenario."""


class PatternError(ScenarioError):
    """Coefficient pattern incompatible with the group structure."""


class InputValidationError(GiggError, ValueError):
    """Malformed input file, config or grid specification."""


class SchemaMismatchError(GiggError, ValueError):
    """Group map and data columns disagree."""
