"""Wall-time scaling benchmarks for the sampler/estimator and the grid
baseline, plus a compiled-vs-pure-Python backend comparison.

The quantity of interest is the scaling exponent b of wall_time ~ size^b,
fitted on log-log axes: the tuple count for the Monte Carlo estimator
(expected close to linear, b ~ 1) and the total grid size for the sparse
eigensolver (superlinear, since Lanczos iteration counts grow with the
spectral range). Timings are wall-clock and inherently noisy; each size is
measured `repeats` times and the minimum is kept (the usual
least-interference estimate).
"""

from __future__ import annotations

import math
import time as _time
from dataclasses import dataclass

import numpy as np

from ._backend import get_backend
from .diag import GridSpec, assemble, ground_state, reduce_relative
from .estimator import EstimatorConfig, SystemSpec, estimate_propagator
from .potentials import PotentialSpec, PotentialTerm, SoftCoulomb

__all__ = [
    "ScalingResult",
    "wmc_scaling",
    "diag_scaling",
    "backend_comparison",
    "fit_exponent",
]


@dataclass(frozen=True)
class ScalingResult:
    method: str
    dimension: int
    sizes: tuple
    wall_times: tuple
    exponent: float

    def timing_rows(self, n_points: int = 0) -> list:
        return [
            {"method": self.method, "dimension": self.dimension,
             "size": s, "n_points": n_points, "wall_time": t}
            for s, t in zip(self.sizes, self.wall_times)
        ]


def fit_exponent(sizes, wall_times) -> float:
    """Slope of ln(time) vs ln(size) by ordinary least squares."""
    x = np.log(np.asarray(sizes, dtype=float))
    y = np.log(np.asarray(wall_times, dtype=float))
    design = np.column_stack([np.ones_like(x), x])
    beta, *_ = np.linalg.lstsq(design, y, rcond=None)
    return float(beta[1])


def _soft_pair_system(dimension: int) -> SystemSpec:
    potential = PotentialSpec(
        n_particles=2, dimension=dimension,
        terms=(PotentialTerm(SoftCoulomb(alpha=1.0, d=1.0), (0, 1)),),
    )
    zeros = np.zeros((2, dimension))
    return SystemSpec(masses=(1.0, 1.0), dimension=dimension,
                      potential=potential, x_start=zeros, x_end=zeros)


def _best_of(fn, repeats: int) -> float:
    best = math.inf
    for _ in range(repeats):
        t0 = _time.perf_counter()
        fn()
        best = min(best, _time.perf_counter() - t0)
    return best


def wmc_scaling(tuple_counts, dimension: int, n_points: int = 2000,
                seed: int = 0, repeats: int = 2, time_value: float = 2.0,
                backend: str = None) -> ScalingResult:
    """Time the nested two-particle estimator at each total tuple count.

    tuple_counts are total Wilson-line samples; the per-particle loop count
    is their square root (rounded), so the realised size is recomputed from
    it and reported alongside the timing.
    """
    system = _soft_pair_system(dimension)
    sizes = []
    times = []
    for count in tuple_counts:
        n_loops = max(2, round(math.sqrt(count)))
        cfg = EstimatorConfig(n_loops=n_loops, n_points=n_points, seed=seed,
                              backend=backend)
        estimate_propagator(system, cfg, time_value)  # warm-up & allocate
        wall = _best_of(
            lambda: estimate_propagator(system, cfg, time_value), repeats)
        sizes.append(n_loops * n_loops)
        times.append(wall)
    return ScalingResult(
        method="wmc", dimension=dimension, sizes=tuple(sizes),
        wall_times=tuple(times), exponent=fit_exponent(sizes, times),
    )


def diag_scaling(n_list, dimension: int = 2, seed: int = 0,
                 repeats: int = 1, half_width: float = 10.0) -> ScalingResult:
    """Time the grid ground-state solve for the relative soft-Coulomb
    problem at each per-axis size; sizes are total node counts N^D."""
    pair = _soft_pair_system(dimension)
    mu, potential = reduce_relative(pair.masses, pair.potential)
    sizes = []
    times = []
    for n in n_list:
        grid = GridSpec(n_points=n, half_width=half_width, n_particles=1,
                        dimension=dimension)
        ham = assemble((mu,), potential, grid)
        ground_state(ham)  # warm-up
        wall = _best_of(lambda: ground_state(ham), repeats)
        sizes.append(grid.n_total)
        times.append(wall)
    return ScalingResult(
        method="diag", dimension=dimension, sizes=tuple(sizes),
        wall_times=tuple(times), exponent=fit_exponent(sizes, times),
    )


def backend_comparison(n_loops: int = 300, n_points: int = 2000,
                       dimension: int = 1, seed: int = 0,
                       repeats: int = 2) -> dict:
    """Wall time of the same nested estimate on each available backend."""
    system = _soft_pair_system(dimension)
    out = {}
    for name in ("python", "cython"):
        try:
            get_backend(name)
        except Exception:
            continue
        cfg = EstimatorConfig(n_loops=n_loops, n_points=n_points, seed=seed,
                              backend=name)
        estimate_propagator(system, cfg, 2.0)  # warm-up
        out[name] = _best_of(
            lambda: estimate_propagator(system, cfg, 2.0), repeats)
    return out
