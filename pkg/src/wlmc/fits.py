"""Weighted fits of -ln K(T) and derived quantities.

Ground-state energies come from the late-time behaviour

    -ln K(T) = -a + E0*T                 (gapped systems)
    -ln K(T) = -a + E0*T + b*ln(T)       (systems with free directions;
                                          each free direction contributes
                                          1/2 to b)

Both forms are linear in their parameters, so the weighted least-squares
solution is exact: rows scaled by 1/err, solved by lstsq, parameter
covariance (X^T W X)^{-1} with W = diag(1/err^2). Supplied errors are
treated as true standard deviations (the covariance is not rescaled by
chi^2/dof); the report includes chi2/dof so callers can judge the model.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import (
    ConfigError,
    IllConditionedError,
    InsufficientPointsError,
    NoStableWindowError,
    SignMixtureError,
    SingularDesignError,
)

__all__ = [
    "FitResult",
    "WindowChoice",
    "fit_linear",
    "fit_linear_plus_log",
    "fit_power_law",
    "select_window",
]


@dataclass(frozen=True)
class FitResult:
    """Weighted least-squares estimate of the energy-fit parameters."""

    e0: float
    e0_err: float
    offset: float  # a in -ln K = -a + E0 T [+ b ln T]
    offset_err: float
    log_coeff: float = 0.0  # b; 0 for the pure linear form
    log_coeff_err: float = 0.0
    chi2: float = 0.0
    n_points: int = 0
    t_min: float = 0.0
    t_max: float = 0.0
    form: str = "linear"

    @property
    def dof(self) -> int:
        n_params = 2 if self.form == "linear" else 3
        return max(self.n_points - n_params, 0)

    @property
    def chi2_per_dof(self) -> float:
        return self.chi2 / self.dof if self.dof > 0 else math.nan


def _validate_xyerr(t, y, err, n_params):
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    err = np.asarray(err, dtype=float)
    if t.shape != y.shape or t.shape != err.shape or t.ndim != 1:
        raise ConfigError("t, y, err must be 1D arrays of equal length")
    if t.size < n_params:
        raise InsufficientPointsError(
            f"need at least {n_params} points, got {t.size}"
        )
    if np.any(err <= 0) or not np.all(np.isfinite(err)):
        raise ConfigError("errors must be positive and finite")
    if not (np.all(np.isfinite(t)) and np.all(np.isfinite(y))):
        raise ConfigError("t and y must be finite")
    return t, y, err


def _weighted_solve(x, y, err, cond_limit=1e10):
    """Return (beta, cov, chi2) for the model X beta = y with err sigmas.

    Raises SingularDesignError on rank deficiency (all abscissae equal) and
    IllConditionedError when the weighted design's condition number exceeds
    cond_limit — the solve would amplify noise beyond usefulness.
    """
    sw = 1.0 / err
    xw = x * sw[:, None]
    yw = y * sw
    beta, _, rank, sv = np.linalg.lstsq(xw, yw, rcond=None)
    if rank < x.shape[1]:
        raise SingularDesignError(
            "fit design matrix is rank deficient; abscissae do not span "
            "the model basis"
        )
    cond = float(sv[0] / sv[-1])
    if cond > cond_limit:
        raise IllConditionedError(
            f"fit design condition number {cond:.3g} exceeds {cond_limit:.0e}",
            condition_number=cond,
        )
    resid = (y - x @ beta) / err
    chi2 = float(resid @ resid)
    cov = np.linalg.inv(xw.T @ xw)
    return beta, cov, chi2


def fit_linear(t, y, err) -> FitResult:
    """Fit y = -a + E0*t with weights 1/err^2 (y is -ln K)."""
    t, y, err = _validate_xyerr(t, y, err, 2)
    x = np.column_stack([-np.ones_like(t), t])
    beta, cov, chi2 = _weighted_solve(x, y, err)
    return FitResult(
        e0=float(beta[1]), e0_err=float(math.sqrt(cov[1, 1])),
        offset=float(beta[0]), offset_err=float(math.sqrt(cov[0, 0])),
        chi2=chi2, n_points=t.size, t_min=float(t.min()),
        t_max=float(t.max()), form="linear",
    )


def fit_linear_plus_log(t, y, err) -> FitResult:
    """Fit y = -a + E0*t + b*ln(t) with weights 1/err^2 (y is -ln K)."""
    t, y, err = _validate_xyerr(t, y, err, 3)
    if np.any(t <= 0):
        raise ConfigError("t must be positive for the log form")
    x = np.column_stack([-np.ones_like(t), t, np.log(t)])
    beta, cov, chi2 = _weighted_solve(x, y, err)
    return FitResult(
        e0=float(beta[1]), e0_err=float(math.sqrt(cov[1, 1])),
        offset=float(beta[0]), offset_err=float(math.sqrt(cov[0, 0])),
        log_coeff=float(beta[2]), log_coeff_err=float(math.sqrt(cov[2, 2])),
        chi2=chi2, n_points=t.size, t_min=float(t.min()),
        t_max=float(t.max()), form="linear_plus_log",
    )


@dataclass(frozen=True)
class PowerLawResult:
    exponent: float
    exponent_err: float
    prefactor: float  # |E0| at the unit of the abscissa
    chi2: float
    n_points: int


def fit_power_law(x, values, errs) -> PowerLawResult:
    """Fit |values| = C * x**p on log-log axes, weighted by errs.

    All values must share one sign (a power law cannot cross zero);
    SignMixtureError otherwise.
    """
    x = np.asarray(x, dtype=float)
    v = np.asarray(values, dtype=float)
    e = np.asarray(errs, dtype=float)
    if x.shape != v.shape or x.shape != e.shape or x.ndim != 1:
        raise ConfigError("x, values, errs must be 1D arrays of equal length")
    if x.size < 2:
        raise InsufficientPointsError("need at least 2 points")
    if np.any(x <= 0):
        raise ConfigError("abscissa must be positive")
    if np.any(v == 0) or (np.any(v > 0) and np.any(v < 0)):
        raise SignMixtureError(
            "power-law fit requires values of one nonzero sign"
        )
    if np.any(e <= 0):
        raise ConfigError("errors must be positive")
    ly = np.log(np.abs(v))
    le = e / np.abs(v)
    xm = np.column_stack([np.ones_like(x), np.log(x)])
    beta, cov, chi2 = _weighted_solve(xm, ly, le)
    return PowerLawResult(
        exponent=float(beta[1]), exponent_err=float(math.sqrt(cov[1, 1])),
        prefactor=float(math.exp(beta[0])), chi2=chi2, n_points=x.size,
    )


@dataclass(frozen=True)
class WindowChoice:
    """Outcome of the fit-window search."""

    t_min: float
    t_max: float
    fit: FitResult
    n_candidates: int
    stable_starts: tuple


def select_window(t, y, err, fit_fn=fit_linear_plus_log,
                  min_span: float = 10.0,
                  preferred_span: float = 15.0) -> WindowChoice:
    """Choose a late-time fit window and fit it.

    Candidate windows end at the last available time and start at each data
    point that leaves a span of at least min_span (the full range serves as
    a candidate even when shorter than preferred_span but not min_span...
    never; min_span is a hard floor). A candidate is stable when moving its
    start one point later shifts the fitted E0 by less than one reported
    sigma. Among stable candidates the lowest chi2/dof wins; ties go to the
    latest start. Spans longer than preferred_span are not generated:
    the earliest candidate start is the first point within preferred_span
    of the end, so the search prefers windows of about preferred_span.

    Raises NoStableWindowError with fewer than 8 points or when no
    candidate is stable.
    """
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    err = np.asarray(err, dtype=float)
    order = np.argsort(t)
    t, y, err = t[order], y[order], err[order]
    if t.size < 8:
        raise NoStableWindowError(
            f"window search needs at least 8 points, got {t.size}"
        )
    t_end = t[-1]
    starts = [
        i for i in range(t.size)
        if min_span <= t_end - t[i] <= preferred_span
    ]
    if not starts:
        # all spans shorter than min_span is hopeless; all longer than
        # preferred_span means the data reach far: take starts giving the
        # smallest spans above preferred_span
        spans = t_end - t
        viable = np.where(spans >= min_span)[0]
        if viable.size == 0:
            raise NoStableWindowError(
                f"no window of span >= {min_span} available"
            )
        starts = [int(viable[-1])]
    stable = []
    for i in starts:
        if t.size - i < 8:
            continue
        try:
            fit_i = fit_fn(t[i:], y[i:], err[i:])
            fit_next = fit_fn(t[i + 1:], y[i + 1:], err[i + 1:])
        except (InsufficientPointsError, SingularDesignError,
                IllConditionedError):
            continue
        if abs(fit_next.e0 - fit_i.e0) < fit_i.e0_err:
            stable.append((i, fit_i))
    if not stable:
        raise NoStableWindowError(
            "no candidate window passed the one-sigma stability test"
        )
    def rank(item):
        i, fit_i = item
        c = fit_i.chi2_per_dof
        return (c if math.isfinite(c) else math.inf, -i)
    i_best, fit_best = min(stable, key=rank)
    return WindowChoice(
        t_min=float(t[i_best]), t_max=float(t_end), fit=fit_best,
        n_candidates=len(starts), stable_starts=tuple(i for i, _ in stable),
    )
