"""Experiment orchestration: sweeps, kernel series, fits, baselines.

One run resolves the sweep (if any), and for each sweep value produces a
kernel series over the T grid, an energy fit, and — when a diag block is
present — grid baseline energies with rational extrapolation. Failures of
individual sweep points are recorded and do not abort the remaining work;
the exit status then reports a runtime error with partial results intact.

Randomness is addressed by (seed, sweep parameter and value, T,
repetition, particle, loop index), so results for a sweep value do not
depend on its position in the sweep list.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import __version__, diag, fits, records
from .config import RunConfig, build_system, estimator_config, resolve_t_grid
from .errors import (
    ConfigError,
    InsufficientPointsError,
    NonPositiveMeanError,
    WlmcError,
)
from .estimator import estimate_propagator
from .potentials import GaussianWell, SquareWell

__all__ = ["ExperimentResult", "run_experiment", "n_free_directions"]


@dataclass
class ExperimentResult:
    exit_code: int
    kernel_rows: list = field(default_factory=list)
    energy_rows: list = field(default_factory=list)
    diag_rows: list = field(default_factory=list)
    errors: list = field(default_factory=list)
    summary: list = field(default_factory=list)
    files: list = field(default_factory=list)


def n_free_directions(potential, dimension: int) -> int:
    """Count dimensions along which the spectrum stays gapless.

    A dimension is free when no single-particle binding well (negative
    depth) acts along it for any particle: the centre of mass then moves in
    an asymptotically flat landscape and contributes a continuum. Pair
    terms never localise the centre of mass, and barriers (positive
    strength) do not bind. Each free dimension adds 1/2 to the expected
    log-coefficient of the kernel fit; here only the count is needed to
    choose the fit form.
    """
    confined = [False] * dimension
    for term in potential.terms:
        if term.is_pair:
            continue
        form = term.form
        if isinstance(form, SquareWell) and form.v0 < 0:
            hw = np.broadcast_to(
                np.asarray(form.half_widths, dtype=float), (dimension,)
            )
            for c in range(dimension):
                if math.isfinite(hw[c]):
                    confined[c] = True
        elif isinstance(form, GaussianWell) and form.v0 < 0 and form.lam > 0:
            for c in range(dimension):
                confined[c] = True
    return confined.count(False)


def _fit_form(config: RunConfig, system):
    form = config.fit.get("form", "auto")
    if form == "auto":
        free = n_free_directions(system.potential, system.dimension)
        form = "linear_plus_log" if free > 0 else "linear"
    return form


def _fit_series(config: RunConfig, form: str, t, y, err):
    fit_fn = fits.fit_linear if form == "linear" else fits.fit_linear_plus_log
    min_span = float(config.fit.get("min_span", 10.0))
    preferred = float(config.fit.get("preferred_span", 15.0))
    t = np.asarray(t)
    span = float(t.max() - t.min()) if t.size else 0.0
    if t.size >= 8 and span >= min_span:
        choice = fits.select_window(t, y, err, fit_fn=fit_fn,
                                    min_span=min_span,
                                    preferred_span=preferred)
        return choice.fit
    return fit_fn(t, y, err)


def _sweep_points(config: RunConfig):
    if config.sweep is None:
        return [(None, None)]
    param = config.sweep["parameter"]
    return [(param, float(v)) for v in config.sweep["values"]]


def _wmc_point(config, system, est_cfg, time, context_tag, rows, label,
               value, progress):
    try:
        est = estimate_propagator(system, est_cfg, time,
                                  context_tag=context_tag)
    except NonPositiveMeanError as exc:
        if progress:
            progress(f"warning: T={time:g}: {exc}; point excluded")
        rows.append({
            "sweep_parameter": label, "sweep_value": value, "t": time,
            "ln_k": None, "ln_k_err": None, "wilson_mean": None,
            "wilson_sem": None, "n_samples": 0,
            "n_repetitions": 0, "n_excluded": exc.n_excluded, "n_flagged": 0,
        })
        return None
    rows.append({
        "sweep_parameter": label, "sweep_value": value, "t": time,
        "ln_k": est.ln_k, "ln_k_err": est.ln_k_err,
        "wilson_mean": est.wilson_mean, "wilson_sem": est.wilson_sem,
        "n_samples": est.n_samples, "n_repetitions": est.n_repetitions,
        "n_excluded": est.n_excluded, "n_flagged": est.n_flagged,
    })
    return est


def _run_wmc(config, system, est_cfg, label, value, result, progress):
    t_grid = resolve_t_grid(config.wmc["t_grid"])
    context_tag = () if label is None else (label, value)
    kept_t, kept_y, kept_e = [], [], []
    for time in t_grid:
        est = _wmc_point(config, system, est_cfg, float(time), context_tag,
                         result.kernel_rows, label, value, progress)
        if est is not None and est.ln_k_err > 0:
            kept_t.append(est.time)
            kept_y.append(-est.ln_k)
            kept_e.append(est.ln_k_err)
    form = _fit_form(config, system)
    fit = _fit_series(config, form, np.array(kept_t), np.array(kept_y),
                      np.array(kept_e))
    result.energy_rows.append({
        "sweep_parameter": label, "sweep_value": value, "source": "wmc",
        "e0": fit.e0, "e0_err": fit.e0_err, "t_min": fit.t_min,
        "t_max": fit.t_max, "form": fit.form,
        "chi2_per_dof": fit.chi2_per_dof, "n_points": fit.n_points,
    })
    return fit


def _run_diag(config, system, label, value, result):
    block = config.diag
    rr = block.get("reduce_relative", "auto")
    reducible = (system.n_particles == 2
                 and system.potential.is_translation_invariant())
    if rr is True and not reducible:
        raise ConfigError(
            "diag.reduce_relative: system is not a translation-invariant "
            "pair; cannot reduce"
        )
    if rr == "auto":
        rr = reducible
    if rr:
        masses, potential = diag.reduce_relative(system.masses,
                                                 system.potential)
        masses = (masses,)
        n_particles = 1
    else:
        masses, potential = system.masses, system.potential
        n_particles = system.n_particles

    n_list = sorted(block["n_points"])
    energies = []
    for n in n_list:
        grid = diag.GridSpec(
            n_points=n, half_width=float(block.get("half_width", 10.0)),
            n_particles=n_particles, dimension=system.dimension,
        )
        ham = diag.assemble(masses, potential, grid)
        state = diag.ground_state(ham, tol=float(block.get("tolerance", 0.0)))
        energies.append(state.energy)
        result.diag_rows.append({
            "sweep_parameter": label, "sweep_value": value, "n_grid": n,
            "n_total": grid.n_total, "e0": state.energy,
            "residual": state.residual,
        })

    orders = block.get("extrapolation_orders", [3])
    extrapolated = []
    for order in orders:
        try:
            model = diag.extrapolate(np.array(n_list, dtype=float),
                                     np.array(energies), order=order)
        except InsufficientPointsError:
            continue
        extrapolated.append((order, model.value))
        result.energy_rows.append({
            "sweep_parameter": label, "sweep_value": value,
            "source": f"diag-pade{order}", "e0": model.value,
            "e0_err": None, "t_min": None, "t_max": None, "form": None,
            "chi2_per_dof": None, "n_points": len(n_list),
        })
    if extrapolated:
        # Best estimate: highest order; its error: spread across orders
        # (zero when only one order could be fitted).
        e0 = extrapolated[-1][1]
        err = (abs(extrapolated[-1][1] - extrapolated[0][1])
               if len(extrapolated) > 1 else 0.0)
    else:
        e0 = energies[-1]
        err = abs(energies[-1] - energies[-2]) if len(energies) > 1 else 0.0
    result.energy_rows.append({
        "sweep_parameter": label, "sweep_value": value, "source": "diag",
        "e0": e0, "e0_err": err, "t_min": None, "t_max": None, "form": None,
        "chi2_per_dof": None, "n_points": len(n_list),
    })
    return e0, err


def run_experiment(config: RunConfig, out_dir: str = None, workers: int = 1,
                   seed_override: int = None, progress=None
                   ) -> ExperimentResult:
    """Run all sweep points; write one CSV per record kind; summarise."""
    result = ExperimentResult(exit_code=0)
    est_cfg = (estimator_config(config, seed_override, workers)
               if config.wmc else None)
    seed = est_cfg.seed if est_cfg else 0

    for label, value in _sweep_points(config):
        override = None if label is None else {label: value}
        wmc_fit = None
        diag_e = None
        try:
            system = build_system(config, override)
        except WlmcError as exc:
            result.errors.append((label, value, "system", str(exc)))
            result.exit_code = 2
            if progress:
                progress(f"error: sweep {label}={value}: {exc}")
            continue
        if config.wmc:
            try:
                wmc_fit = _run_wmc(config, system, est_cfg, label, value,
                                   result, progress)
            except WlmcError as exc:
                result.errors.append((label, value, "wmc", str(exc)))
                result.exit_code = 2
                if progress:
                    progress(f"error: sweep {label}={value} wmc: {exc}")
        if config.diag:
            try:
                diag_e = _run_diag(config, system, label, value, result)
            except WlmcError as exc:
                result.errors.append((label, value, "diag", str(exc)))
                result.exit_code = 2
                if progress:
                    progress(f"error: sweep {label}={value} diag: {exc}")
        parts = []
        if label is not None:
            parts.append(f"{label}={value:g}")
        if wmc_fit is not None:
            parts.append(f"E0_wmc={wmc_fit.e0:.6f}+-{wmc_fit.e0_err:.6f}")
        if diag_e is not None:
            parts.append(f"E0_diag={diag_e[0]:.6f}+-{diag_e[1]:.6f}")
        if parts:
            line = "  ".join(parts)
            result.summary.append(line)
            if progress:
                progress(line)

    if out_dir is not None:
        provenance = {
            "version": __version__,
            "config_sha256": config.sha256,
            "seed": seed,
        }
        if config.wmc:
            result.files.append(records.write_records(
                out_dir, "kernel-point", result.kernel_rows, provenance))
        if config.wmc or config.diag:
            result.files.append(records.write_records(
                out_dir, "energy", result.energy_rows, provenance))
        if config.diag:
            result.files.append(records.write_records(
                out_dir, "diag-point", result.diag_rows, provenance))
    return result
