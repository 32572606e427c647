"""Sparse grid diagonalisation baseline.

Discretises the n-particle Hamiltonian H = sum_j p_j^2/(2 m_j) + V on a
regular product grid with Dirichlet (hard-wall) boundaries and finds the
ground state with a Lanczos eigensolver. Each coordinate axis covers
[-L, L] with N interior nodes,

    h = 2L / (N + 1),        x_i = -L + (i + 1) h,   i = 0..N-1,

so the wavefunction vanishes on the implicit boundary nodes at +-L. The
kinetic term is the standard second-order stencil
(2 v_i - v_{i-1} - v_{i+1}) / (2 m h^2) per axis, applied matrix-free.

The discretisation error is O(h^2) plus a hard-wall truncation error that
falls exponentially with L once the box dominates the bound-state tails,
so box-level convergence studies vary N at fixed L and extrapolate in 1/N.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.sparse.linalg import ArpackNoConvergence, LinearOperator, eigsh

from .errors import (
    ConfigError,
    DegenerateNodesError,
    InsufficientPointsError,
    NoConvergenceError,
    PolesOnRangeError,
    SingularityError,
    SingularPotentialOnGridError,
)
from .potentials import (
    GaussianWell,
    PotentialSpec,
    PotentialTerm,
    SquareWell,
    _CENTRAL_TYPES,
)

__all__ = [
    "GridSpec",
    "GridHamiltonian",
    "GroundState",
    "PadeResult",
    "assemble",
    "ground_state",
    "ground_state_dense",
    "reduce_relative",
    "extrapolate",
    "error_model",
]

# Hard cap on grid nodes; beyond this the diagonal alone is ~1 GB and the
# Lanczos workspace several times that.
MAX_GRID_NODES = 130_000_000


@dataclass(frozen=True)
class GridSpec:
    """Regular product grid: N interior nodes per axis on [-L, L]."""

    n_points: int
    half_width: float = 10.0
    n_particles: int = 1
    dimension: int = 1

    def __post_init__(self):
        if self.n_points < 2:
            raise ConfigError("grid needs at least 2 interior points per axis")
        if self.half_width <= 0:
            raise ConfigError("grid half_width must be positive")
        if self.n_particles < 1 or self.dimension < 1:
            raise ConfigError("n_particles and dimension must be positive")
        if self.n_total > MAX_GRID_NODES:
            raise ConfigError(
                f"grid of {self.n_total} nodes exceeds the "
                f"{MAX_GRID_NODES}-node cap"
            )

    @property
    def n_axes(self) -> int:
        return self.n_particles * self.dimension

    @property
    def n_total(self) -> int:
        return self.n_points ** self.n_axes

    @property
    def step(self) -> float:
        return 2.0 * self.half_width / (self.n_points + 1)

    def axis_coords(self) -> np.ndarray:
        i = np.arange(self.n_points, dtype=float)
        return -self.half_width + (i + 1.0) * self.step


@dataclass(frozen=True)
class GridHamiltonian:
    """Matrix-free discretised Hamiltonian on a GridSpec."""

    grid: GridSpec
    masses: tuple
    v_diag: np.ndarray  # potential at the nodes, flat C-order

    @property
    def shape_grid(self) -> tuple:
        return (self.grid.n_points,) * self.grid.n_axes

    def _axis_coeff(self, axis: int) -> float:
        particle = axis // self.grid.dimension
        h = self.grid.step
        return 1.0 / (2.0 * self.masses[particle] * h * h)

    def matvec(self, vec: np.ndarray) -> np.ndarray:
        vec = np.asarray(vec, dtype=float).reshape(-1)
        out = self.v_diag * vec
        vr = vec.reshape(self.shape_grid)
        outr = out.reshape(self.shape_grid)
        full = (slice(None),)
        for axis in range(self.grid.n_axes):
            c = self._axis_coeff(axis)
            head = full * axis
            lo = head + (slice(None, -1),)
            hi = head + (slice(1, None),)
            outr += (2.0 * c) * vr
            outr[lo] -= c * vr[hi]
            outr[hi] -= c * vr[lo]
        return out

    def linear_operator(self) -> LinearOperator:
        n = self.grid.n_total
        return LinearOperator((n, n), matvec=self.matvec, dtype=float)

    def to_dense(self, max_size: int = 8192) -> np.ndarray:
        n = self.grid.n_total
        if n > max_size:
            raise ConfigError(
                f"dense assembly of {n} nodes exceeds max_size={max_size}"
            )
        eye = np.eye(n)
        cols = [self.matvec(eye[:, j]) for j in range(n)]
        return np.stack(cols, axis=1)


def _broadcast_axis(values: np.ndarray, axis: int, n_axes: int):
    """View a 1D node array along one axis of the full product grid."""
    shape = [1] * n_axes
    shape[axis] = values.size
    return values.reshape(shape)


def assemble(masses, potential: PotentialSpec, grid: GridSpec) -> GridHamiltonian:
    """Evaluate the potential on the grid and wrap the stencil operator.

    Raises SingularPotentialOnGridError when a term is singular at a node
    (a bare-Coulomb pair term on a shared-axis grid hits r = 0 on the
    diagonal; shift the grid or soften the term).
    """
    masses = tuple(float(m) for m in masses)
    if len(masses) != grid.n_particles:
        raise ConfigError("masses count must match grid.n_particles")
    if any(m <= 0 for m in masses):
        raise ConfigError("masses must be positive")
    if potential.n_particles != grid.n_particles:
        raise ConfigError("potential and grid particle counts differ")
    if potential.dimension != grid.dimension:
        raise ConfigError("potential and grid dimensions differ")

    coords = grid.axis_coords()
    n_axes = grid.n_axes
    dim = grid.dimension

    def axis_of(particle: int, component: int) -> int:
        return particle * dim + component

    v = np.zeros((grid.n_points,) * n_axes)
    for term in potential.terms:
        cen = np.zeros(dim)
        if term.center is not None:
            cen = np.broadcast_to(
                np.asarray(term.center, dtype=float), (dim,)
            )

        def component(c: int):
            """Broadcastable y_c for this term on the full grid."""
            if term.is_pair:
                a, b = term.particles
                return (
                    _broadcast_axis(coords, axis_of(a, c), n_axes)
                    - _broadcast_axis(coords, axis_of(b, c), n_axes)
                )
            j = term.particles[0]
            return _broadcast_axis(coords - cen[c], axis_of(j, c), n_axes)

        form = term.form
        if isinstance(form, _CENTRAL_TYPES):
            r2 = np.zeros((grid.n_points,) * n_axes)
            for c in range(dim):
                yc = component(c)
                r2 += yc * yc
            try:
                v += form.radial(r2)
            except SingularityError as exc:
                raise SingularPotentialOnGridError(
                    f"{type(form).__name__} term on particles "
                    f"{term.particles} is singular at a grid node"
                ) from exc
        elif isinstance(form, SquareWell):
            hw = np.broadcast_to(
                np.asarray(form.half_widths, dtype=float), (dim,)
            )
            if np.any(hw <= 0):
                raise ConfigError("square-well half widths must be positive")
            wc = np.zeros(dim) if form.center is None else np.broadcast_to(
                np.asarray(form.center, dtype=float), (dim,)
            )
            inside = np.ones((1,) * n_axes, dtype=bool)
            for c in range(dim):
                inside = inside & (np.abs(component(c) - wc[c]) < hw[c])
            v += np.where(inside, form.v0, 0.0)
        elif isinstance(form, GaussianWell):
            wc = np.zeros(dim) if form.center is None else np.broadcast_to(
                np.asarray(form.center, dtype=float), (dim,)
            )
            r2 = np.zeros((grid.n_points,) * n_axes)
            for c in range(dim):
                yc = component(c) - wc[c]
                r2 += yc * yc
            v += form.v0 * np.exp(-form.lam * r2)
        else:  # pragma: no cover - PotentialTerm validation rejects others
            raise ConfigError(f"cannot place term {form!r} on a grid")
        if not np.all(np.isfinite(v)):
            raise SingularPotentialOnGridError(
                f"term {type(form).__name__} on particles {term.particles} "
                "produced non-finite node values"
            )
    return GridHamiltonian(grid=grid, masses=masses, v_diag=v.reshape(-1))


@dataclass(frozen=True)
class GroundState:
    energy: float
    residual: float
    n_nodes: int


def ground_state(ham: GridHamiltonian, tol: float = 0.0,
                 maxiter: int = None, seed: int = 11) -> GroundState:
    """Lowest eigenvalue via Lanczos with a deterministic start vector."""
    n = ham.grid.n_total
    if n <= 2:
        raise ConfigError("grid too small for the sparse eigensolver")
    v0 = np.random.default_rng(seed).standard_normal(n)
    try:
        vals, vecs = eigsh(
            ham.linear_operator(), k=1, which="SA", v0=v0, tol=tol,
            maxiter=maxiter,
        )
    except ArpackNoConvergence as exc:
        best = float(exc.eigenvalues[0]) if len(exc.eigenvalues) else math.nan
        raise NoConvergenceError(
            "Lanczos did not converge", best_estimate=best
        ) from exc
    e0 = float(vals[0])
    vec = vecs[:, 0]
    residual = float(np.linalg.norm(ham.matvec(vec) - e0 * vec))
    return GroundState(energy=e0, residual=residual, n_nodes=n)


def ground_state_dense(ham: GridHamiltonian, max_size: int = 4096) -> float:
    """Lowest eigenvalue by dense symmetric diagonalisation (small grids)."""
    from scipy.linalg import eigh

    dense = ham.to_dense(max_size=max_size)
    return float(eigh(dense, eigvals_only=True, subset_by_index=(0, 0))[0])


def reduce_relative(masses, potential: PotentialSpec):
    """Map a translation-invariant two-particle system to one particle.

    Separating the centre of mass leaves H_rel = p^2/(2 mu) + V(y) with
    y = x_0 - x_1 and mu the reduced mass. Pair terms become
    single-particle terms in y; terms written on (1, 0) see y' = -y, which
    leaves central forms unchanged and mirrors well centres.

    Returns (mu, reduced PotentialSpec with n_particles=1).
    """
    if potential.n_particles != 2:
        raise ConfigError("relative reduction requires exactly two particles")
    if not potential.is_translation_invariant():
        raise ConfigError(
            "relative reduction requires a translation-invariant potential "
            "(pair terms only)"
        )
    masses = tuple(float(m) for m in masses)
    if len(masses) != 2 or any(m <= 0 for m in masses):
        raise ConfigError("need two positive masses")
    mu = masses[0] * masses[1] / (masses[0] + masses[1])
    new_terms = []
    for t in potential.terms:
        form = t.form
        reversed_pair = t.particles == (1, 0)
        if reversed_pair and isinstance(form, (SquareWell, GaussianWell)):
            if form.center is not None:
                form = replace(
                    form, center=tuple(-c for c in form.center)
                )
        new_terms.append(PotentialTerm(form=form, particles=(0,)))
    reduced = PotentialSpec(
        n_particles=1, dimension=potential.dimension, terms=tuple(new_terms),
    )
    return mu, reduced


@dataclass(frozen=True)
class PadeResult:
    value: float  # extrapolated limit at 1/N -> 0
    numerator: tuple
    denominator: tuple  # leading coefficient fixed to 1
    order: int
    n_points: int
    max_residual: float

    def __call__(self, x: float) -> float:
        p = np.polyval(self.numerator[::-1], x)
        q = np.polyval(self.denominator[::-1], x)
        return p / q


def extrapolate(n_values, energies, order: int = 3) -> PadeResult:
    """Extrapolate E(N) to N -> infinity with a diagonal rational model.

    Writes E = P(x)/Q(x) in x = 1/N with deg P = deg Q = order and
    Q(0) = 1, linearises E*Q = P, and solves the least-squares system.
    The limit is P(0). Raises PolesOnRangeError when the fitted Q changes
    sign or vanishes anywhere on [0, max(x)] — the extrapolant would pass
    through a pole inside the data range and cannot be trusted.
    """
    n_values = np.asarray(n_values, dtype=float)
    energies = np.asarray(energies, dtype=float)
    if n_values.shape != energies.shape or n_values.ndim != 1:
        raise ConfigError("n_values and energies must match 1D shapes")
    if np.any(n_values <= 0):
        raise ConfigError("n_values must be positive")
    if order < 1:
        raise ConfigError("order must be at least 1")
    m = n_values.size
    n_params = 2 * order + 1
    if m < n_params:
        raise InsufficientPointsError(
            f"rational order {order} needs {n_params} points, got {m}"
        )
    x = 1.0 / n_values
    cols = [x ** k for k in range(order + 1)]
    cols += [-energies * x ** k for k in range(1, order + 1)]
    a = np.column_stack(cols)
    beta, *_ = np.linalg.lstsq(a, energies, rcond=None)
    p = beta[: order + 1]
    q = np.concatenate([[1.0], beta[order + 1:]])
    # Q(0) = 1, so a pole inside [0, max(x)] shows up as Q dipping to or
    # through zero somewhere on the sampled range.
    xs = np.linspace(0.0, float(x.max()), 1001)
    qs = np.polyval(q[::-1], xs)
    if np.any(qs <= 0.0):
        raise PolesOnRangeError(
            "rational extrapolant has a pole inside the data range"
        )
    fitted = np.polyval(p[::-1], x) / np.polyval(q[::-1], x)
    return PadeResult(
        value=float(p[0]), numerator=tuple(float(c) for c in p),
        denominator=tuple(float(c) for c in q), order=order, n_points=m,
        max_residual=float(np.max(np.abs(fitted - energies))),
    )


def error_model(spacings, deviations) -> tuple:
    """Quadratic model delta(h) = a + b h + c h^2 through three nodes.

    Exactly three (spacing, deviation) pairs; distinct spacings required,
    DegenerateNodesError otherwise. Returns (a, b, c); a is the
    zero-spacing intercept.
    """
    h = np.asarray(spacings, dtype=float)
    d = np.asarray(deviations, dtype=float)
    if h.shape != (3,) or d.shape != (3,):
        raise ConfigError("error model takes exactly three nodes")
    if len({float(v) for v in h}) != 3:
        raise DegenerateNodesError("spacings must be distinct")
    vander = np.column_stack([np.ones(3), h, h * h])
    det = np.linalg.det(vander)
    scale = float(np.max(np.abs(h))) or 1.0
    if abs(det) < 1e-12 * scale ** 3:
        raise DegenerateNodesError("spacing nodes are numerically degenerate")
    a, b, c = np.linalg.solve(vander, d)
    return float(a), float(b), float(c)
