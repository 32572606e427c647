"""Unit-loop generation and rescaling to physical worldlines.

A unit loop q is a discrete Brownian bridge on the unit time interval,
pinned to zero at both ends: N_p + 1 points q_0 .. q_{N_p}, with
q_0 = q_{N_p} = 0 exactly and covariance

    Cov(q_j, q_k) = min(j, k) * (N_p - max(j, k)) / N_p**2

per Cartesian component. Loops are generated by a one-pass filter: draw
omega_i with density proportional to exp(-omega^2) per component
(a standard normal scaled by 1/sqrt(2)), set

    qbar_i = sqrt(2/N_p) * sqrt((N_p - i) / (N_p + 1 - i)) * omega_i
    q_i    = qbar_i + (N_p - i) / (N_p + 1 - i) * q_{i-1},    i = 1 .. N_p-1

A unit loop is turned into a particle's worldline between fixed endpoints by

    x(u_k) = x_start + (x_end - x_start) * u_k + sqrt(T / m) * q_k

with u_k = k / N_p. Randomness is addressed per (loop index, particle,
repetition, context) substream, so ensembles are reproducible bitwise and
independent across particles and repetitions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterator

import numpy as np

from . import _backend, rng
from .errors import ConfigError, ShapeError

__all__ = [
    "LoopConfig",
    "UnitLoopSet",
    "Worldline",
    "bridge_coefficients",
    "loops_from_noise",
    "sample_unit_loops",
    "generate_unit_loop",
    "generate_ensemble",
    "rescale_to_worldline",
    "unit_times",
]

_INV_SQRT2 = 1.0 / math.sqrt(2.0)


@dataclass(frozen=True)
class LoopConfig:
    """Parameters of a loop ensemble."""

    n_points: int
    dimension: int
    n_particles: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.n_points < 2:
            raise ConfigError("n_points must be at least 2")
        if self.dimension < 1:
            raise ConfigError("dimension must be positive")
        if self.n_particles < 1:
            raise ConfigError("n_particles must be positive")
        if not 0 <= int(self.seed) < 2**64:
            raise ConfigError("seed must fit in uint64")


@dataclass(frozen=True)
class UnitLoopSet:
    """One unit loop per particle; loops[j] has shape (n_points+1, dim)."""

    loops: np.ndarray
    index: int

    @property
    def n_particles(self) -> int:
        return self.loops.shape[0]


@dataclass(frozen=True)
class Worldline:
    """A particle path with pinned endpoints over total time `time`."""

    positions: np.ndarray  # (n_points + 1, dim)
    x_start: np.ndarray
    x_end: np.ndarray
    time: float
    mass: float


def unit_times(n_points: int) -> np.ndarray:
    """u_k = k / N_p for k = 0 .. N_p (endpoints included)."""
    return np.arange(n_points + 1) / float(n_points)


def bridge_coefficients(n_points: int) -> tuple[np.ndarray, np.ndarray]:
    """(scale, carry) arrays of the bridge filter, index i = 1 .. N_p - 1.

    scale multiplies omega_i, carry multiplies q_{i-1}. Both backends are
    fed these exact arrays so generated loops do not depend on the backend.
    """
    i = np.arange(1, n_points)
    ratio = (n_points - i) / (n_points + 1.0 - i)
    scale = np.sqrt(2.0 / n_points) * np.sqrt(ratio)
    return scale, ratio


def loops_from_noise(noise: np.ndarray, n_points: int, num_threads: int = 1,
                     backend=None) -> np.ndarray:
    """Map raw standard-normal noise (n_loops, N_p - 1, dim) to unit loops.

    Returns (n_loops, N_p + 1, dim) with exact zeros in slices 0 and N_p.
    """
    if noise.ndim != 3 or noise.shape[1] != n_points - 1:
        raise ShapeError(
            f"noise must have shape (n_loops, {n_points - 1}, dim), "
            f"got {noise.shape}"
        )
    core = backend if backend is not None else _backend.active
    scale, carry = bridge_coefficients(n_points)
    omega = noise * _INV_SQRT2
    qbar = omega * scale[None, :, None]
    qbar = np.ascontiguousarray(qbar)
    return core.bridge_recursion(qbar, carry, num_threads=num_threads)


def sample_unit_loops(
    key: np.ndarray,
    n_loops: int,
    n_points: int,
    dimension: int,
    particle: int = 0,
    repetition: int = 0,
    context: int = 0,
    first_index: int = 0,
    num_threads: int = 1,
    backend=None,
) -> np.ndarray:
    """Draw a batch of unit loops for one particle.

    Loop l of the batch comes from the substream addressed by
    (first_index + l, particle, repetition, context), so any batching of the
    same index range yields the same loops.
    """
    noise = np.empty((n_loops, n_points - 1, dimension))
    for l in range(n_loops):
        gen = rng.substream(
            key, first_index + l, particle, repetition, context=context
        )
        noise[l] = gen.standard_normal((n_points - 1, dimension))
    return loops_from_noise(noise, n_points, num_threads=num_threads,
                            backend=backend)


def generate_unit_loop(
    config: LoopConfig,
    loop_index: int,
    particle: int = 0,
    repetition: int = 0,
    context: int = 0,
) -> np.ndarray:
    """Single unit loop (n_points + 1, dim) for one substream address."""
    key = rng.philox_key(config.seed)
    batch = sample_unit_loops(
        key,
        1,
        config.n_points,
        config.dimension,
        particle=particle,
        repetition=repetition,
        context=context,
        first_index=loop_index,
    )
    return batch[0]


def generate_ensemble(config: LoopConfig) -> Iterator[UnitLoopSet]:
    """Yield UnitLoopSet items with independent loops per particle.

    The stream is unbounded; callers take as many items as they need.
    Item i always holds the loops of substreams (i, particle j) regardless
    of how many items were consumed before, so the stream can be re-created
    identically at any time.
    """
    key = rng.philox_key(config.seed)
    index = 0
    while True:
        loops = np.empty(
            (config.n_particles, config.n_points + 1, config.dimension)
        )
        for j in range(config.n_particles):
            loops[j] = sample_unit_loops(
                key,
                1,
                config.n_points,
                config.dimension,
                particle=j,
                first_index=index,
            )[0]
        yield UnitLoopSet(loops=loops, index=index)
        index += 1


def rescale_to_worldline(
    loop: np.ndarray,
    x_start,
    x_end,
    time: float,
    mass: float,
) -> Worldline:
    """Pin a unit loop between physical endpoints over total time `time`."""
    loop = np.asarray(loop, dtype=float)
    if loop.ndim != 2:
        raise ShapeError("loop must be a (n_points + 1, dim) array")
    n_points = loop.shape[0] - 1
    dim = loop.shape[1]
    x0 = np.broadcast_to(np.asarray(x_start, dtype=float), (dim,)).copy()
    x1 = np.broadcast_to(np.asarray(x_end, dtype=float), (dim,)).copy()
    if time <= 0:
        raise ConfigError("time must be positive")
    if mass <= 0:
        raise ConfigError("mass must be positive")
    u = unit_times(n_points)
    pos = x0 + np.outer(u, x1 - x0) + math.sqrt(time / mass) * loop
    pos[0] = x0
    pos[-1] = x1
    return Worldline(positions=pos, x_start=x0, x_end=x1, time=float(time),
                     mass=float(mass))


def rescale_batch(loops: np.ndarray, x_start, x_end, time: float,
                  mass: float) -> np.ndarray:
    """Vector version of rescale_to_worldline for a (n_loops, N_p+1, dim)
    batch; returns positions only."""
    n_points = loops.shape[1] - 1
    dim = loops.shape[2]
    x0 = np.broadcast_to(np.asarray(x_start, dtype=float), (dim,))
    x1 = np.broadcast_to(np.asarray(x_end, dtype=float), (dim,))
    u = unit_times(n_points)
    line = x0 + np.outer(u, x1 - x0)
    pos = line[None, :, :] + math.sqrt(time / mass) * loops
    pos[:, 0, :] = x0
    pos[:, -1, :] = x1
    return np.ascontiguousarray(pos)
