"""Worldline Monte Carlo propagator estimation for few-particle quantum
systems, cross-validated by a sparse grid diagonalisation baseline.

The estimator computes imaginary-time propagators K_n(T) as the free-particle
kernel times the sampled average of Wilson-line factors
W = exp(-(T/N_p) sum_k V(x_1(u_k), ..., x_n(u_k))) over pinned Brownian
bridge worldlines. Ground-state energies follow from weighted fits of
-ln K(T); an independent finite-difference grid diagonalisation provides the
cross-check.
"""

from ._backend import backend_name, get_backend
from .errors import (
    ConfigError,
    DegenerateNodesError,
    IllConditionedError,
    InsufficientPointsError,
    LogSingularSegmentError,
    NoConvergenceError,
    NonPositiveMeanError,
    NoStableWindowError,
    PolesOnRangeError,
    ShapeError,
    SignMixtureError,
    SingularDesignError,
    SingularityError,
    SingularPotentialOnGridError,
    WlmcError,
)

__version__ = "0.1.0"
