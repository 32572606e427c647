"""Worldline Monte Carlo estimation of imaginary-time propagators.

The n-particle propagator between pinned endpoint configurations factorises
as the product of free kernels times the expectation of the Wilson line

    W = exp(-(T/N_p) * sum_{k=1..N_p} V(x_1(u_k), ..., x_n(u_k)))

over independent bridge worldlines per particle. Two sample layouts:

    nested  one list of N_L loops per particle, W summed over all N_L^n
            combinations; the exponent is a sum of per-pair and
            per-particle tables, so the full combination sum costs
            O(n_pairs N_L^2 N_p + N_L^n) instead of O(N_L^n N_p)
    flat    independent loop tuples, one W each

The sample mean and its standard error come from single-pass accumulation
of sum W and sum W^2 (compensated); the error of ln K is SEM/<W>.
Repetitions are independent full estimates; their ln K values combine by
inverse-variance weights, with the combined error widened by
sqrt(chi^2/dof) when the scatter exceeds the internal expectation.

The potential may be shifted by a constant (`potential_offset`): the shift
is applied inside the exponent and removed from ln K analytically, which
changes nothing mathematically but keeps exp() in range for deeply bound
systems.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import _backend, rng
from .analytic import free_ln_kernel
from .errors import ConfigError, LogSingularSegmentError, NonPositiveMeanError, ShapeError
from .loops import rescale_batch, sample_unit_loops, unit_times
from .potentials import BareCoulomb, PotentialSpec, compile_terms
from ._corepy import segment_average_terms

__all__ = [
    "SystemSpec",
    "EstimatorConfig",
    "PropagatorEstimate",
    "free_kernel",
    "smoothed_segment",
    "wilson_line",
    "estimate_propagator",
    "reweighted_expectation",
]

_FLAT_CHUNK = 2048  # fixed: flat-mode accumulation must not depend on workers


@dataclass(frozen=True)
class SystemSpec:
    """Particles, endpoints, and the potential they move in."""

    masses: tuple
    dimension: int
    potential: PotentialSpec
    x_start: np.ndarray = None
    x_end: np.ndarray = None

    def __post_init__(self):
        masses = tuple(float(m) for m in self.masses)
        if any(m <= 0 for m in masses):
            raise ConfigError("masses must be positive")
        object.__setattr__(self, "masses", masses)
        n, dim = len(masses), self.dimension
        if self.potential.n_particles != n:
            raise ConfigError(
                f"potential is for {self.potential.n_particles} particles, "
                f"system has {n}"
            )
        if self.potential.dimension != dim:
            raise ConfigError("potential and system dimension differ")
        for name in ("x_start", "x_end"):
            val = getattr(self, name)
            arr = np.zeros((n, dim)) if val is None else np.asarray(val, float)
            if arr.shape != (n, dim):
                raise ShapeError(f"{name} must have shape ({n}, {dim})")
            object.__setattr__(self, name, arr)

    @property
    def n_particles(self) -> int:
        return len(self.masses)


@dataclass(frozen=True)
class EstimatorConfig:
    """Sampling parameters of one propagator estimate."""

    n_loops: int = 200
    n_points: int = 5000
    repetitions: int = 1
    mode: str = "nested"
    n_tuples: int = None  # flat mode only; defaults to n_loops**n
    smoothing: bool = False
    potential_offset: float = 0.0
    seed: int = 0
    workers: int = 1
    backend: str = None

    def __post_init__(self):
        if self.n_loops < 1:
            raise ConfigError("n_loops must be positive")
        if self.n_points < 2:
            raise ConfigError("n_points must be at least 2")
        if self.repetitions < 1:
            raise ConfigError("repetitions must be positive")
        if self.mode not in ("nested", "flat"):
            raise ConfigError("mode must be 'nested' or 'flat'")
        if self.n_tuples is not None and self.mode != "flat":
            raise ConfigError("n_tuples only applies to flat mode")
        if self.workers < 1:
            raise ConfigError("workers must be positive")


@dataclass(frozen=True)
class PropagatorEstimate:
    """One estimated propagator value at fixed total time."""

    time: float
    ln_k: float
    ln_k_err: float
    free_ln_k: float
    wilson_mean: float
    wilson_sem: float
    n_samples: int
    n_repetitions: int
    n_excluded: int
    n_flagged: int
    per_repetition: tuple = ()

    @property
    def flagged_fraction(self) -> float:
        return self.n_flagged / self.n_samples if self.n_samples else 0.0


def free_kernel(x_end, x_start, time: float, mass: float) -> float:
    """Free-particle kernel (m/(2 pi T))^{D/2} exp(-m|x'-x|^2/(2T))."""
    if time <= 0:
        raise ConfigError("time must be positive")
    if mass <= 0:
        raise ConfigError("mass must be positive")
    return math.exp(free_ln_kernel(x_end, x_start, time, mass))


def smoothed_segment(d_prev, d_next) -> float:
    """Average of 1/|y(l)| along the straight segment y: d_prev -> d_next.

    Closed form: with delta = d_next - d_prev,

        (1/|delta|) ln[(d_next.delta + |delta||d_next|) /
                       (d_prev.delta + |delta||d_prev|)]

    Degenerate segments (delta ~ 0) return the constant value 1/|d_prev|.
    Raises LogSingularSegmentError when the average diverges (the segment
    passes through the origin, or an endpoint sits on it).
    """
    dp = np.atleast_1d(np.asarray(d_prev, dtype=float))
    dn = np.atleast_1d(np.asarray(d_next, dtype=float))
    if dp.shape != dn.shape or dp.ndim != 1:
        raise ShapeError("segment endpoints must be vectors of equal length")
    val, bad = segment_average_terms(dp[None, :], dn[None, :])
    if bad[0] or not np.isfinite(val[0]):
        raise LogSingularSegmentError(
            "segment average of 1/r diverges for this endpoint configuration"
        )
    return float(val[0])


def _system_free_ln_k(system: SystemSpec, time: float) -> float:
    total = 0.0
    for j, m in enumerate(system.masses):
        total += free_ln_kernel(system.x_end[j], system.x_start[j], time, m)
    return total


def wilson_line(worldlines, potential: PotentialSpec, time: float,
                smoothing: bool = False) -> float:
    """Reference Wilson line for one worldline per particle.

    worldlines: sequence of position arrays (n_points + 1, dim), endpoints
    included, one per particle. Evaluates the potential pointwise on every
    time slice (right-endpoint rule); with smoothing on, bare-Coulomb terms
    use the per-segment log average instead, falling back to the
    right-endpoint value on divergent segments.

    This path is deliberately independent of the batched table kernels and
    serves as their cross-check.
    """
    positions = np.stack(
        [np.asarray(getattr(w, "positions", w), dtype=float)
         for w in worldlines],
        axis=1,
    )  # (n_points + 1, n, dim)
    n_points = positions.shape[0] - 1
    tau = time / n_points
    if potential.n_particles != positions.shape[1]:
        raise ShapeError("one worldline per particle required")
    total = 0.0
    if smoothing:
        smooth_terms = [t for t in potential.terms
                        if isinstance(t.form, BareCoulomb)]
        plain = PotentialSpec(
            n_particles=potential.n_particles,
            dimension=potential.dimension,
            terms=tuple(t for t in potential.terms if t not in smooth_terms),
        )
        for t in smooth_terms:
            y = t.coordinate(positions)  # (n_points + 1, dim)
            vals, bad = segment_average_terms(y[:-1], y[1:])
            coeff = t.form.sign * -t.form.alpha
            total += coeff * math.fsum(vals.tolist())
        if plain.terms:
            v = plain.evaluate(positions[1:])
            total += math.fsum(v.tolist())
    else:
        v = potential.evaluate(positions[1:])
        total += math.fsum(v.tolist())
    return math.exp(-tau * total)


def _canonical_center(desc, reverse: bool):
    cen = desc.vec0
    if reverse and cen is not None:
        cen = -cen
    return np.ascontiguousarray(cen)


def _build_tables(core, descriptors, positions, workers):
    """Pair/single tables for the nested combination sum.

    positions: list of (N_L, n_points+1, dim) arrays, one per particle.
    Returns (pair_sums, pair_flags, single_sums, single_flags, const_sum)
    keyed by sorted particle pairs / particle index.
    """
    n = len(positions)
    n_loops = positions[0].shape[0]
    pair_sums = {}
    pair_flags = {}
    single_sums = {}
    single_flags = {}
    const_sum = 0.0
    for desc in descriptors:
        const_sum += desc.constant
        if desc.route in ("central_pair", "well_pair", "smoothed_pair"):
            a, b = desc.particles
            key = (min(a, b), max(a, b))
            reverse = a > b
            xa, xb = positions[key[0]], positions[key[1]]
            if desc.route == "central_pair":
                m = core.central_pair_table(
                    xa, xb, desc.kind, desc.c0, desc.c1, desc.c2,
                    num_threads=workers,
                )
                f = None
            elif desc.route == "well_pair":
                cen = _canonical_center(desc, reverse)
                m = core.well_pair_table(
                    xa, xb, desc.kind, desc.c0, desc.c1, cen,
                    np.ascontiguousarray(desc.vec1), num_threads=workers,
                )
                f = None
            else:
                m, f = core.smoothed_pair_table(
                    xa, xb, desc.c0, desc.c2, num_threads=workers
                )
            if key in pair_sums:
                pair_sums[key] = pair_sums[key] + m
            else:
                pair_sums[key] = m
            if f is not None:
                pair_flags[key] = (
                    f if key not in pair_flags else (pair_flags[key] | f)
                )
        else:
            (j,) = desc.particles
            xj = positions[j]
            if desc.route == "central_single":
                s = core.central_single_table(
                    xj, np.ascontiguousarray(desc.vec0), desc.kind,
                    desc.c0, desc.c1, desc.c2, num_threads=workers,
                )
                f = None
            elif desc.route == "well_single":
                s = core.well_single_table(
                    xj, desc.kind, desc.c0, desc.c1,
                    np.ascontiguousarray(desc.vec0),
                    np.ascontiguousarray(desc.vec1), num_threads=workers,
                )
                f = None
            else:
                s, f = core.smoothed_single_table(
                    xj, np.ascontiguousarray(desc.vec0), desc.c0, desc.c2,
                    num_threads=workers,
                )
            if j in single_sums:
                single_sums[j] = single_sums[j] + s
            else:
                single_sums[j] = s
            if f is not None:
                single_flags[j] = (
                    f if j not in single_flags else (single_flags[j] | f)
                )
    return pair_sums, pair_flags, single_sums, single_flags, const_sum


def _diag_exponent(core, descriptors, positions, workers):
    """Per-tuple table sums for flat mode (aligned loop tuples)."""
    n_tuples = positions[0].shape[0]
    total = np.zeros(n_tuples)
    flags = None
    const_sum = 0.0
    for desc in descriptors:
        const_sum += desc.constant
        if desc.route in ("central_pair", "well_pair", "smoothed_pair"):
            a, b = desc.particles
            key = (min(a, b), max(a, b))
            reverse = a > b
            xa, xb = positions[key[0]], positions[key[1]]
            if desc.route == "central_pair":
                v = core.central_pair_diag(
                    xa, xb, desc.kind, desc.c0, desc.c1, desc.c2,
                    num_threads=workers,
                )
                f = None
            elif desc.route == "well_pair":
                cen = _canonical_center(desc, reverse)
                v = core.well_pair_diag(
                    xa, xb, desc.kind, desc.c0, desc.c1, cen,
                    np.ascontiguousarray(desc.vec1), num_threads=workers,
                )
                f = None
            else:
                v, f = core.smoothed_pair_diag(
                    xa, xb, desc.c0, desc.c2, num_threads=workers
                )
        else:
            (j,) = desc.particles
            xj = positions[j]
            if desc.route == "central_single":
                v = core.central_single_table(
                    xj, np.ascontiguousarray(desc.vec0), desc.kind,
                    desc.c0, desc.c1, desc.c2, num_threads=workers,
                )
                f = None
            elif desc.route == "well_single":
                v = core.well_single_table(
                    xj, desc.kind, desc.c0, desc.c1,
                    np.ascontiguousarray(desc.vec0),
                    np.ascontiguousarray(desc.vec1), num_threads=workers,
                )
                f = None
            else:
                v, f = core.smoothed_single_table(
                    xj, np.ascontiguousarray(desc.vec0), desc.c0, desc.c2,
                    num_threads=workers,
                )
        total += v
        if f is not None:
            flags = f if flags is None else (flags | f)
    return total, flags, const_sum


def _rep_positions(system, config, key, time, repetition, context,
                   n_loops, first_index=0):
    positions = []
    for j in range(system.n_particles):
        loops = sample_unit_loops(
            key, n_loops, config.n_points, system.dimension,
            particle=j, repetition=repetition, context=context,
            first_index=first_index, num_threads=config.workers,
            backend=_backend.get_backend(config.backend)
            if config.backend else None,
        )
        positions.append(
            rescale_batch(loops, system.x_start[j], system.x_end[j],
                          time, system.masses[j])
        )
    return positions


def _accumulate_repetition(system, config, time, repetition, context, key):
    core = _backend.get_backend(config.backend) if config.backend \
        else _backend.active
    descriptors = compile_terms(system.potential, config.smoothing)
    n = system.n_particles
    tau = time / config.n_points
    n_loops = config.n_loops
    if config.mode == "nested":
        if n > 3:
            raise ConfigError(
                "nested mode supports up to 3 particles; use flat mode"
            )
        positions = _rep_positions(
            system, config, key, time, repetition, context, n_loops
        )
        pair_sums, pair_flags, single_sums, single_flags, const_sum = \
            _build_tables(core, descriptors, positions, config.workers)
        extra = -time * (const_sum - config.potential_offset)
        zeros1 = np.zeros(n_loops)

        def s(j):
            return single_sums.get(j, zeros1)

        def sf(j):
            return single_flags.get(j)

        if n == 1:
            expo = -tau * s(0) + extra
            s1, s2, nflag = core.exp_stats(
                np.ascontiguousarray(expo), sf(0), num_threads=config.workers
            )
            count = n_loops
        elif n == 2:
            m = pair_sums.get((0, 1), np.zeros((n_loops, n_loops)))
            s1, s2, nflag = core.combine2(
                np.ascontiguousarray(m), s(0), s(1), tau, extra,
                pair_flags.get((0, 1)), sf(0), sf(1),
                num_threads=config.workers,
            )
            count = n_loops * n_loops
        else:
            zeros2 = np.zeros((n_loops, n_loops))
            s1, s2, nflag = core.combine3(
                np.ascontiguousarray(pair_sums.get((0, 1), zeros2)),
                np.ascontiguousarray(pair_sums.get((0, 2), zeros2)),
                np.ascontiguousarray(pair_sums.get((1, 2), zeros2)),
                s(0), s(1), s(2), tau, extra,
                pair_flags.get((0, 1)), pair_flags.get((0, 2)),
                pair_flags.get((1, 2)), num_threads=config.workers,
            )
            count = n_loops**3
        return s1, s2, count, nflag
    # flat mode: aligned independent tuples, streamed in fixed chunks
    n_tuples = config.n_tuples if config.n_tuples is not None \
        else n_loops**n
    parts_w = []
    parts_w2 = []
    nflag = 0
    done = 0
    while done < n_tuples:
        chunk = min(_FLAT_CHUNK, n_tuples - done)
        positions = _rep_positions(
            system, config, key, time, repetition, context, chunk,
            first_index=done,
        )
        total, flags, const_sum = _diag_exponent(
            core, descriptors, positions, config.workers
        )
        extra = -time * (const_sum - config.potential_offset)
        expo = -tau * total + extra
        s1, s2, nf = core.exp_stats(
            np.ascontiguousarray(expo), flags, num_threads=config.workers
        )
        parts_w.append(s1)
        parts_w2.append(s2)
        nflag += nf
        done += chunk
    return (
        float(np.sum(np.asarray(parts_w))),
        float(np.sum(np.asarray(parts_w2))),
        n_tuples,
        nflag,
    )


def _mean_sem(s1: float, s2: float, count: int):
    mean = s1 / count
    var_num = s2 - s1 * (s1 / count)
    if var_num < 0.0:
        var_num = 0.0
    sem = math.sqrt(var_num / (count * (count - 1))) if count > 1 else math.inf
    return mean, sem


def estimate_propagator(system: SystemSpec, config: EstimatorConfig,
                        time: float, context_tag: tuple = ()) -> PropagatorEstimate:
    """Estimate K(T) for the system at one total time.

    Randomness is addressed by (seed, time value, context_tag, repetition,
    particle, loop index); estimates at different times or sweep points are
    therefore independent and reproducible regardless of evaluation order.

    Raises NonPositiveMeanError when no repetition yields a positive finite
    Wilson-line mean.
    """
    if time <= 0:
        raise ConfigError("time must be positive")
    key = rng.philox_key(config.seed)
    context = rng.context_hash("wilson", float(time), *context_tag)
    free_ln = _system_free_ln_k(system, time)
    offset_corr = -config.potential_offset * time

    per_rep = []
    n_samples = 0
    n_flagged = 0
    n_excluded = 0
    for r in range(config.repetitions):
        s1, s2, count, nflag = _accumulate_repetition(
            system, config, time, r, context, key
        )
        n_samples += count
        n_flagged += nflag
        mean, sem = _mean_sem(s1, s2, count)
        if not math.isfinite(mean) or mean <= 0.0:
            n_excluded += 1
            continue
        ln_k_r = free_ln + math.log(mean) + offset_corr
        err_r = sem / mean
        per_rep.append((ln_k_r, err_r))
    if not per_rep:
        raise NonPositiveMeanError(
            f"Wilson-line mean not positive and finite in any of "
            f"{config.repetitions} repetitions at T={time}",
            n_excluded=n_excluded,
        )

    if len(per_rep) == 1:
        ln_k, err = per_rep[0]
    else:
        vals = np.array([v for v, _ in per_rep])
        errs = np.array([e for _, e in per_rep])
        if np.any(errs == 0.0):
            exact = vals[errs == 0.0]
            ln_k, err = float(exact.mean()), 0.0
        else:
            w = 1.0 / errs**2
            ln_k = float(np.sum(w * vals) / np.sum(w))
            internal = 1.0 / math.sqrt(float(np.sum(w)))
            chi2 = float(np.sum(w * (vals - ln_k) ** 2))
            dof = len(vals) - 1
            scale = math.sqrt(chi2 / dof) if dof > 0 else 1.0
            err = internal * max(1.0, scale)
    wilson_mean = math.exp(ln_k - free_ln)
    wilson_sem = wilson_mean * err
    return PropagatorEstimate(
        time=float(time),
        ln_k=ln_k,
        ln_k_err=err,
        free_ln_k=free_ln,
        wilson_mean=wilson_mean,
        wilson_sem=wilson_sem,
        n_samples=n_samples,
        n_repetitions=config.repetitions - n_excluded,
        n_excluded=n_excluded,
        n_flagged=n_flagged,
        per_repetition=tuple(per_rep),
    )


def reweighted_expectation(system: SystemSpec, config: EstimatorConfig,
                           time: float, observable,
                           context_tag: tuple = ()) -> float:
    """<O W> / <W> over flat worldline tuples.

    observable(positions) receives one (chunk, n_points + 1, dim) array per
    particle and returns a value per tuple. Uses flat sampling regardless of
    config.mode (per-sample weights are required); the substream addressing
    matches flat-mode estimates with the same config.
    """
    core = _backend.get_backend(config.backend) if config.backend \
        else _backend.active
    key = rng.philox_key(config.seed)
    context = rng.context_hash("wilson", float(time), *context_tag)
    descriptors = compile_terms(system.potential, config.smoothing)
    tau = time / config.n_points
    n = system.n_particles
    n_tuples = config.n_tuples if config.n_tuples is not None \
        else config.n_loops**n
    num_parts = []
    den_parts = []
    done = 0
    while done < n_tuples:
        chunk = min(_FLAT_CHUNK, n_tuples - done)
        positions = _rep_positions(
            system, config, key, time, 0, context, chunk, first_index=done
        )
        total, _flags, const_sum = _diag_exponent(
            core, descriptors, positions, config.workers
        )
        extra = -time * (const_sum - config.potential_offset)
        with np.errstate(over="ignore"):
            w = np.exp(-tau * total + extra)
        o = np.asarray(observable(positions), dtype=float)
        if o.shape != (chunk,):
            raise ShapeError("observable must return one value per tuple")
        num_parts.append(float(np.sum(o * w)))
        den_parts.append(float(np.sum(w)))
        done += chunk
    den = float(np.sum(np.asarray(den_parts)))
    if not math.isfinite(den) or den <= 0.0:
        raise NonPositiveMeanError(
            f"Wilson-line mean not positive and finite at T={time}"
        )
    return float(np.sum(np.asarray(num_parts))) / den
