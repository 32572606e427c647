"""Closed-form references used for validation and synthetic data.

These are exact results for systems the sampler is tested against: the
two-particle harmonic propagator, Coulomb ground-state energies in one and
two dimensions, and the lowest level of a hard-wall box.
"""

from __future__ import annotations

import math

import numpy as np

__all__ = [
    "ln_sinh",
    "free_ln_kernel",
    "harmonic_pair_ln_propagator",
    "harmonic_relative_energy",
    "coulomb_energy_1d",
    "coulomb_energy_2d",
    "box_ground_energy",
]


def ln_sinh(x: float) -> float:
    """ln(sinh(x)) for x > 0, stable for large x."""
    if x <= 0:
        raise ValueError("ln_sinh requires x > 0")
    # sinh x = e^x (1 - e^{-2x}) / 2
    return x + math.log1p(-math.exp(-2.0 * x)) - math.log(2.0)


def free_ln_kernel(x_end, x_start, time: float, mass: float) -> float:
    """ln of the free-particle kernel (m/(2 pi T))^{D/2} e^{-m|dx|^2/(2T)}."""
    dx = np.asarray(x_end, dtype=float) - np.asarray(x_start, dtype=float)
    dim = dx.size
    return 0.5 * dim * math.log(mass / (2.0 * math.pi * time)) - mass * float(
        dx @ dx
    ) / (2.0 * time)


def harmonic_pair_ln_propagator(
    x_start,
    x_end,
    time: float,
    masses,
    mu: float,
    omega: float,
    d: float = 0.0,
) -> float:
    """ln K for two particles bound by (mu omega^2 / 2)(r^2 + d^2).

    Centre of mass is free with total mass M; the relative coordinate is an
    oscillator of mass mu and frequency omega. The transverse offset d only
    shifts the exponent by -(mu omega^2 d^2 / 2) T.
    """
    x_start = np.asarray(x_start, dtype=float)
    x_end = np.asarray(x_end, dtype=float)
    if x_start.shape != x_end.shape or x_start.shape[0] != 2:
        raise ValueError("endpoints must have shape (2, dim)")
    m1, m2 = float(masses[0]), float(masses[1])
    mtot = m1 + m2
    dim = x_start.shape[1]
    rcm_s = (m1 * x_start[0] + m2 * x_start[1]) / mtot
    rcm_e = (m1 * x_end[0] + m2 * x_end[1]) / mtot
    r_s = x_start[0] - x_start[1]
    r_e = x_end[0] - x_end[1]
    w_t = omega * time
    ln_cm = free_ln_kernel(rcm_e, rcm_s, time, mtot)
    ln_rel = 0.5 * dim * (
        math.log(mu * omega / (2.0 * math.pi)) - ln_sinh(w_t)
    ) - (mu * omega / (2.0 * math.sinh(w_t))) * (
        (r_s @ r_s + r_e @ r_e) * math.cosh(w_t) - 2.0 * float(r_s @ r_e)
    )
    return ln_cm + ln_rel - 0.5 * mu * omega * omega * d * d * time


def harmonic_relative_energy(mu: float, omega: float, d: float,
                             dimension: int) -> float:
    """Relative-motion ground energy (omega/2)(D + mu omega d^2)."""
    return 0.5 * omega * (dimension + mu * omega * d * d)


def coulomb_energy_1d(level: int, mu: float = 0.5, alpha: float = 1.0) -> float:
    """Bound levels -mu alpha^2 / (2 i^2), i = 1, 2, ...; the true ground
    state of the unregularised 1D problem lies below any finite value."""
    if level < 1:
        raise ValueError("level must be >= 1")
    return -mu * alpha * alpha / (2.0 * level * level)


def coulomb_energy_2d(level: int = 1, mu: float = 0.5,
                      alpha: float = 1.0) -> float:
    """2D levels -mu alpha^2 / (2 (l - 1/2)^2); ground state -2 mu alpha^2."""
    if level < 1:
        raise ValueError("level must be >= 1")
    return -mu * alpha * alpha / (2.0 * (level - 0.5) ** 2)


def box_ground_energy(mass: float, half_width: float) -> float:
    """Lowest level of a hard-wall box of full width 2*half_width."""
    return math.pi**2 / (2.0 * mass * (2.0 * half_width) ** 2)
