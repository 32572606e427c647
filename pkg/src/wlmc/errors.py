"""Exception types raised across the package.

Every failure mode named in a function contract maps to one of these, so
callers can discriminate without string matching.
"""


class WlmcError(Exception):
    """Base class for all package errors."""


class ConfigError(WlmcError):
    """Invalid or inconsistent configuration input."""


class ShapeError(WlmcError):
    """Array argument with the wrong shape or dtype."""


class SingularityError(WlmcError):
    """Potential evaluated exactly on a singular point."""


class NonPositiveMeanError(WlmcError):
    """Wilson-line sample mean <= 0; the propagator estimate is unusable."""

    def __init__(self, message, n_excluded=0):
        super().__init__(message)
        self.n_excluded = n_excluded


class LogSingularSegmentError(WlmcError):
    """Smoothed segment hit a configuration with a divergent log average."""


class InsufficientPointsError(WlmcError):
    """Too few data points for the requested fit or window search."""


class NoStableWindowError(WlmcError):
    """No fit window met the stability requirement."""


class SingularDesignError(WlmcError):
    """Fit design matrix is rank deficient (e.g. all abscissae equal)."""


class IllConditionedError(WlmcError):
    """Fit design matrix condition number too large to trust the solve."""

    def __init__(self, message, condition_number=None):
        super().__init__(message)
        self.condition_number = condition_number


class SignMixtureError(WlmcError):
    """Power-law fit input mixes signs; log-log fit undefined."""


class SingularPotentialOnGridError(WlmcError):
    """Grid potential evaluation produced a non-finite node value."""


class NoConvergenceError(WlmcError):
    """Iterative eigensolver failed to converge."""

    def __init__(self, message, best_estimate=None):
        super().__init__(message)
        self.best_estimate = best_estimate


class PolesOnRangeError(WlmcError):
    """Rational extrapolant has a pole inside the sampled range."""


class DegenerateNodesError(WlmcError):
    """Error-model nodes are not distinct."""
