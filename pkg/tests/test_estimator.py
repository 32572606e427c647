"""Propagator estimator: exactness contracts, statistical agreement with
closed forms, and the dual-route check against the reference Wilson line.

Oracles, in order of strength:
  * zero/constant potentials give exactly computable estimates (no MC error);
  * the free kernel obeys normalisation and the semigroup property under
    numerical integration;
  * the smoothed segment average has hand-integrable special cases and a
    quadrature oracle;
  * full estimates are reconstructed externally from the published substream
    addressing and the reference wilson_line and must match the batch-kernel
    route (dual route);
  * a harmonic pair has a closed-form ln K to compare with statistically.
"""

import math

import numpy as np
import pytest
from scipy.integrate import quad

from wlmc import ConfigError, LogSingularSegmentError, NonPositiveMeanError
from wlmc.analytic import harmonic_pair_ln_propagator
from wlmc.estimator import (
    EstimatorConfig,
    SystemSpec,
    estimate_propagator,
    free_kernel,
    free_ln_kernel,
    reweighted_expectation,
    segment_average_terms,
    smoothed_segment,
    wilson_line,
)
from wlmc.loops import rescale_batch, sample_unit_loops
from wlmc.potentials import (
    BareCoulomb,
    GaussianWell,
    Harmonic,
    PotentialSpec,
    PotentialTerm,
    SoftCoulomb,
    SquareWell,
    make_3d_confined_exciton,
    make_exciton_sqwell,
    make_trion_erfc,
    make_trion_soft,
)
from wlmc.rng import context_hash, philox_key


def no_potential(n, dim):
    return PotentialSpec(n_particles=n, dimension=dim, terms=())


def harmonic_pair(dim=1, omega=1.0, d=0.0):
    return SystemSpec(
        masses=(1.0, 1.0), dimension=dim,
        potential=PotentialSpec(
            n_particles=2, dimension=dim,
            terms=(PotentialTerm(Harmonic(mu=0.5, omega=omega, d=d),
                                 (0, 1)),),
        ),
        x_start=np.zeros((2, dim)), x_end=np.zeros((2, dim)),
    )


# ---------------------------------------------------------------- free kernel

def test_free_kernel_closed_form_values():
    # (m / (2 pi T))^{D/2} at coincident points
    assert abs(free_kernel(np.zeros(1), np.zeros(1), 2 * math.pi, 1.0)
               - 1.0 / (2.0 * math.pi)) < 1e-15
    assert abs(free_kernel(np.zeros(2), np.zeros(2), 1.0, 1.0)
               - 1.0 / (2.0 * math.pi)) < 1e-15
    # displacement factor exp(-m |dx|^2 / (2 T))
    val = free_kernel(np.array([1.5]), np.array([0.5]), 2.0, 3.0)
    expected = math.sqrt(3.0 / (4.0 * math.pi)) * math.exp(-3.0 / 4.0)
    assert abs(val - expected) < 1e-15
    assert abs(free_ln_kernel(np.array([1.5]), np.array([0.5]), 2.0, 3.0)
               - math.log(expected)) < 1e-13


def test_free_kernel_normalised():
    x = np.linspace(-12.0, 12.0, 4001)
    k = np.array([free_kernel(np.array([xi]), np.array([0.2]), 1.7, 2.0)
                  for xi in x])
    assert abs(np.trapezoid(k, x) - 1.0) < 1e-9


def test_free_kernel_semigroup():
    # int K(x, z; T1) K(z, y; T2) dz = K(x, y; T1 + T2)
    x, y, t1, t2, m = 0.7, -0.3, 0.9, 1.4, 1.5

    def integrand(z):
        return (free_kernel(np.array([x]), np.array([z]), t1, m)
                * free_kernel(np.array([z]), np.array([y]), t2, m))

    val, _ = quad(integrand, -30.0, 30.0, limit=200)
    direct = free_kernel(np.array([x]), np.array([y]), t1 + t2, m)
    assert abs(val - direct) / direct < 1e-9


# ------------------------------------------------------------ exact contracts

@pytest.mark.parametrize("mode", ["nested", "flat"])
@pytest.mark.parametrize("n,dim", [(1, 1), (2, 2), (3, 3)])
def test_zero_potential_is_exactly_free(mode, n, dim):
    gen = np.random.default_rng(n * 10 + dim)
    x0 = gen.normal(size=(n, dim))
    x1 = gen.normal(size=(n, dim))
    masses = tuple(1.0 + 0.5 * j for j in range(n))
    system = SystemSpec(masses=masses, dimension=dim,
                        potential=no_potential(n, dim),
                        x_start=x0, x_end=x1)
    config = EstimatorConfig(n_loops=5, n_points=16, mode=mode, seed=3)
    est = estimate_propagator(system, config, 1.7)
    free = sum(free_ln_kernel(x1[j], x0[j], 1.7, m)
               for j, m in enumerate(masses))
    assert est.ln_k == free
    assert est.wilson_mean == 1.0
    assert est.wilson_sem == 0.0 and est.ln_k_err == 0.0
    assert est.n_samples == (5 ** n if mode == "nested" else 5 ** n)


@pytest.mark.parametrize("mode", ["nested", "flat"])
def test_constant_potential_exact_exponential(mode):
    # an everywhere-active square well is a constant shift: W = exp(-c T)
    c = 0.8
    system = SystemSpec(
        masses=(1.0,), dimension=2,
        potential=PotentialSpec(
            n_particles=1, dimension=2,
            terms=(PotentialTerm(
                SquareWell(v0=c, half_widths=(math.inf, math.inf)), (0,)),),
        ),
        x_start=np.zeros((1, 2)), x_end=np.zeros((1, 2)),
    )
    config = EstimatorConfig(n_loops=4, n_points=32, mode=mode, seed=1)
    est = estimate_propagator(system, config, 2.5)
    free = free_ln_kernel(np.zeros(2), np.zeros(2), 2.5, 1.0)
    assert abs(est.ln_k - (free - c * 2.5)) < 1e-12
    assert est.ln_k_err < 1e-15


def test_time_must_be_positive():
    system = harmonic_pair()
    with pytest.raises(ConfigError):
        estimate_propagator(system, EstimatorConfig(n_loops=2, n_points=8),
                            0.0)


# ------------------------------------------------------- reference wilson line

def test_wilson_line_zero_worldline_harmonic_offset():
    # all-zero paths: V = (mu w^2/2) d^2 everywhere, so W = exp(-T V)
    pot = PotentialSpec(
        n_particles=2, dimension=1,
        terms=(PotentialTerm(Harmonic(mu=0.5, omega=1.0, d=2.0), (0, 1)),),
    )
    zeros = np.zeros((9, 1))
    w = wilson_line([zeros, zeros], pot, time=1.0)
    assert abs(w - math.exp(-1.0)) < 1e-14


def test_wilson_line_right_endpoint_rule():
    # only slice k=0 sits in the well; the right-endpoint sum excludes it
    pot = PotentialSpec(
        n_particles=1, dimension=1,
        terms=(PotentialTerm(
            SquareWell(v0=-5.0, half_widths=(0.1,), center=(10.0,)), (0,)),),
    )
    positions = np.linspace(10.0, 0.0, 5)[:, None]  # leaves the well at once
    assert wilson_line([positions], pot, time=1.0) == 1.0
    # shifting the well to the final slice makes it count exactly once
    pot_end = PotentialSpec(
        n_particles=1, dimension=1,
        terms=(PotentialTerm(
            SquareWell(v0=-5.0, half_widths=(0.1,), center=(0.0,)), (0,)),),
    )
    w = wilson_line([positions], pot_end, time=1.0)
    assert abs(w - math.exp(5.0 * (1.0 / 4.0))) < 1e-12


# ------------------------------------------------------------ smoothed segment

def test_smoothed_segment_degenerate_is_constant():
    assert smoothed_segment([3.0, 4.0], [3.0, 4.0]) == 1.0 / 5.0


def test_smoothed_segment_collinear_log():
    assert abs(smoothed_segment([1.0, 0.0], [2.0, 0.0]) - math.log(2.0)) \
        < 1e-14


def test_smoothed_segment_matches_quadrature():
    gen = np.random.default_rng(11)
    for _ in range(50):
        dim = int(gen.integers(2, 4))
        dp = gen.normal(size=dim)
        dn = gen.normal(size=dim)
        delta = dn - dp
        val = smoothed_segment(dp, dn)
        oracle, _ = quad(lambda l: 1.0 / np.linalg.norm(dp + l * delta),
                         0.0, 1.0, limit=200)
        assert abs(val - oracle) / oracle < 1e-9


def test_smoothed_segment_through_origin_raises():
    with pytest.raises(LogSingularSegmentError):
        smoothed_segment([1.0, 0.0], [-1.0, 0.0])
    with pytest.raises(LogSingularSegmentError):
        smoothed_segment([0.0, 0.0], [1.0, 0.0])


def test_segment_average_flags_bad_segments():
    dp = np.array([[1.0, 0.0], [1.0, 0.0]])
    dn = np.array([[-1.0, 0.0], [0.0, 1.0]])
    _val, bad = segment_average_terms(dp, dn)
    assert bool(bad[0]) and not bool(bad[1])


def test_wilson_line_smoothing_fallback_on_singular_segment():
    # a path whose segments cross the origin: the smoothed average falls
    # back to the right-endpoint value 1/|d_next| on those segments
    pot = PotentialSpec(
        n_particles=2, dimension=2,
        terms=(PotentialTerm(BareCoulomb(alpha=1.0), (0, 1)),),
    )
    a = np.array([[1.0, 0.0], [-1.0, 0.0], [1.0, 0.0]])
    b = np.zeros((3, 2))
    w = wilson_line([a, b], pot, time=0.1, smoothing=True)
    assert abs(w - math.exp(0.1)) < 1e-13


def test_smoothing_is_identity_for_soft_potentials():
    system = SystemSpec(
        masses=(1.0, 1.0), dimension=2,
        potential=make_exciton_sqwell(ve=-4.0, vh=-2.0, lx=2.0, ly=2.0,
                                      alpha=1.0, d=1.0),
        x_start=np.zeros((2, 2)), x_end=np.zeros((2, 2)),
    )
    base = EstimatorConfig(n_loops=6, n_points=32, seed=5)
    on = estimate_propagator(
        system, EstimatorConfig(**{**base.__dict__, "smoothing": True}), 1.5)
    off = estimate_propagator(system, base, 1.5)
    assert on.ln_k == off.ln_k and on.wilson_sem == off.wilson_sem


def test_smoothing_changes_bare_coulomb():
    system = SystemSpec(
        masses=(1.0, 1.0), dimension=2,
        potential=PotentialSpec(
            n_particles=2, dimension=2,
            terms=(PotentialTerm(BareCoulomb(alpha=1.0), (0, 1)),),
        ),
        x_start=np.array([[0.5, 0.0], [-0.5, 0.0]]),
        x_end=np.array([[0.5, 0.0], [-0.5, 0.0]]),
    )
    base = dict(n_loops=6, n_points=32, seed=5)
    on = estimate_propagator(
        system, EstimatorConfig(smoothing=True, **base), 1.5)
    off = estimate_propagator(
        system, EstimatorConfig(smoothing=False, **base), 1.5)
    assert on.ln_k != off.ln_k


# ----------------------------------------------------------------- dual route

def reconstruct_ln_k(system, n_points, seed, time):
    """Rebuild a single-tuple estimate from the published substream
    addressing and the reference wilson_line (independent of the batch
    kernels)."""
    key = philox_key(seed)
    context = context_hash("wilson", float(time))
    paths = []
    for j, mass in enumerate(system.masses):
        loop = sample_unit_loops(key, 1, n_points, system.dimension,
                                 particle=j, repetition=0, context=context)
        paths.append(rescale_batch(loop, system.x_start[j], system.x_end[j],
                                   time, mass)[0])
    free = sum(free_ln_kernel(system.x_end[j], system.x_start[j], time, m)
               for j, m in enumerate(system.masses))
    return free + math.log(wilson_line(paths, system.potential, time))


@pytest.mark.parametrize("case", ["exciton_wells", "trion_soft_2d",
                                  "trion_erfc_2d", "confined_3d"])
def test_dual_route_single_tuple_matches(case):
    if case == "exciton_wells":
        system = SystemSpec(
            masses=(1.0, 1.5), dimension=1,
            potential=make_exciton_sqwell(ve=-4.0, vh=-2.0, lx=2.0,
                                          alpha=1.0, d=1.0),
            x_start=np.zeros((2, 1)), x_end=np.zeros((2, 1)),
        )
    elif case == "trion_soft_2d":
        system = SystemSpec(
            masses=(1.0, 1.0, 1.0), dimension=2,
            potential=make_trion_soft(alpha=1.0, d=1.0, dimension=2),
            x_start=np.zeros((3, 2)), x_end=np.zeros((3, 2)),
        )
    elif case == "trion_erfc_2d":
        system = SystemSpec(
            masses=(1.0, 1.0, 1.0), dimension=2,
            potential=make_trion_erfc(d=1.0, dimension=2),
            x_start=np.zeros((3, 2)), x_end=np.zeros((3, 2)),
        )
    else:
        system = SystemSpec(
            masses=(1.0, 1.0), dimension=3,
            potential=make_3d_confined_exciton(alpha=1.0, ve=-10.0,
                                               vh=-10.0, lz=1.0, d=2.0),
            x_start=np.array([[0.0, 0.0, -1.0], [0.0, 0.0, 1.0]]),
            x_end=np.array([[0.0, 0.0, -1.0], [0.0, 0.0, 1.0]]),
        )
    time, n_points, seed = 1.3, 64, 21
    smoothing = system.potential.has_bare_coulomb()
    est = estimate_propagator(
        system,
        EstimatorConfig(n_loops=1, n_points=n_points, seed=seed,
                        smoothing=smoothing),
        time,
    )
    # wilson_line applies smoothing only to bare-Coulomb terms, same as the
    # batch route; reconstruct with the same flag
    key = philox_key(seed)
    context = context_hash("wilson", float(time))
    paths = []
    for j, mass in enumerate(system.masses):
        loop = sample_unit_loops(key, 1, n_points, system.dimension,
                                 particle=j, repetition=0, context=context)
        paths.append(rescale_batch(loop, system.x_start[j],
                                   system.x_end[j], time, mass)[0])
    free = sum(free_ln_kernel(system.x_end[j], system.x_start[j], time, m)
               for j, m in enumerate(system.masses))
    expected = free + math.log(
        wilson_line(paths, system.potential, time, smoothing=smoothing))
    assert est.ln_k == pytest.approx(expected, rel=1e-13, abs=0.0)


def test_dual_route_multi_tuple_mean(
):
    # several loops: the batch route's mean of W must match the mean of
    # reference wilson_line values over the same tuple grid
    system = harmonic_pair()
    time, n_points, n_loops, seed = 2.0, 32, 4, 9
    est = estimate_propagator(
        system, EstimatorConfig(n_loops=n_loops, n_points=n_points,
                                seed=seed), time)
    key = philox_key(seed)
    context = context_hash("wilson", float(time))
    paths = []
    for j, mass in enumerate(system.masses):
        loops = sample_unit_loops(key, n_loops, n_points, 1, particle=j,
                                  repetition=0, context=context)
        paths.append(rescale_batch(loops, system.x_start[j],
                                   system.x_end[j], time, mass))
    values = [
        wilson_line([paths[0][i], paths[1][k]], system.potential, time)
        for i in range(n_loops) for k in range(n_loops)
    ]
    assert est.wilson_mean == pytest.approx(float(np.mean(values)),
                                            rel=1e-12, abs=0.0)


# --------------------------------------------------------- statistical checks

def test_harmonic_pair_matches_closed_form_within_errors():
    system = harmonic_pair()
    config = EstimatorConfig(n_loops=64, n_points=512, repetitions=4, seed=2)
    est = estimate_propagator(system, config, 3.0)
    exact = harmonic_pair_ln_propagator(system.x_start, system.x_end, 3.0,
                                        system.masses, 0.5, 1.0, 0.0)
    z = (est.ln_k - exact) / est.ln_k_err
    assert abs(z) < 3.0
    assert est.n_repetitions == 4 and len(est.per_repetition) == 4


def test_transverse_offset_shifts_ln_k_exactly():
    # d enters the sampled exponent only through a factored constant, so
    # ln K(d) = ln K(0) - (mu w^2 d^2 / 2) T with identical noise
    t = 2.0
    base = estimate_propagator(
        harmonic_pair(d=0.0),
        EstimatorConfig(n_loops=16, n_points=64, seed=4), t)
    offset = estimate_propagator(
        harmonic_pair(d=2.0),
        EstimatorConfig(n_loops=16, n_points=64, seed=4), t)
    shift = 0.5 * 0.5 * 1.0 * 4.0 * t
    assert abs((base.ln_k - shift) - offset.ln_k) < 1e-12
    # the constant rides inside exp(a + b) per sample, so the relative
    # error matches to rounding, not bitwise
    assert offset.ln_k_err == pytest.approx(base.ln_k_err, rel=1e-12)


def test_nested_and_flat_agree_within_combined_errors():
    system = harmonic_pair()
    t = 2.0
    nested = estimate_propagator(
        system, EstimatorConfig(n_loops=48, n_points=128, repetitions=6,
                                mode="nested", seed=12), t)
    flat = estimate_propagator(
        system, EstimatorConfig(n_loops=48, n_points=128, repetitions=6,
                                mode="flat", n_tuples=48 * 48, seed=12), t)
    gap = abs(nested.ln_k - flat.ln_k)
    assert gap < 3.0 * math.hypot(nested.ln_k_err, flat.ln_k_err)


def test_sem_scales_as_inverse_sqrt_samples():
    system = harmonic_pair()
    t = 2.0
    sems = []
    for n_loops in (100, 316, 1000):
        est = estimate_propagator(
            system, EstimatorConfig(n_loops=n_loops, n_points=64, seed=6), t)
        sems.append(est.wilson_sem / est.wilson_mean)
    for i, ratio_n in ((0, 3.16), (1, 3.16)):
        ratio = sems[i] / sems[i + 1]
        assert ratio_n / 1.5 < ratio < ratio_n * 1.5
    counts = [100 ** 2, 316 ** 2, 1000 ** 2]
    # absolute anchor: relative SEM at the largest size is small
    assert sems[-1] < 5.0 / math.sqrt(counts[-1])


def test_potential_offset_invariance():
    system = harmonic_pair()
    t = 2.0
    base = estimate_propagator(
        system, EstimatorConfig(n_loops=24, n_points=64, seed=8), t)
    shifted = estimate_propagator(
        system, EstimatorConfig(n_loops=24, n_points=64, seed=8,
                                potential_offset=5.0), t)
    assert abs(base.ln_k - shifted.ln_k) < 1e-12 * abs(base.ln_k)


def test_worker_count_does_not_change_bits():
    system = make_trion_soft(alpha=1.0, d=1.0, dimension=2)
    system = SystemSpec(masses=(1.0, 1.0, 1.0), dimension=2,
                        potential=system,
                        x_start=np.zeros((3, 2)), x_end=np.zeros((3, 2)))
    t = 1.5
    one = estimate_propagator(
        system, EstimatorConfig(n_loops=8, n_points=64, seed=10, workers=1),
        t)
    four = estimate_propagator(
        system, EstimatorConfig(n_loops=8, n_points=64, seed=10, workers=4),
        t)
    assert one.ln_k == four.ln_k and one.wilson_sem == four.wilson_sem


def test_estimate_error_invariant():
    system = harmonic_pair()
    for reps in (1, 3):
        est = estimate_propagator(
            system, EstimatorConfig(n_loops=16, n_points=64,
                                    repetitions=reps, seed=13), 2.0)
        assert est.ln_k_err == pytest.approx(
            est.wilson_sem / est.wilson_mean, rel=1e-15)


def test_all_samples_underflow_raises_non_positive_mean():
    # a stiff repulsive oscillator at large T drives every W to exactly 0
    system = SystemSpec(
        masses=(1.0, 1.0), dimension=1,
        potential=PotentialSpec(
            n_particles=2, dimension=1,
            terms=(PotentialTerm(Harmonic(mu=0.5, omega=200.0, d=0.0),
                                 (0, 1)),),
        ),
        x_start=np.zeros((2, 1)), x_end=np.zeros((2, 1)),
    )
    with pytest.raises(NonPositiveMeanError):
        estimate_propagator(
            system, EstimatorConfig(n_loops=8, n_points=64, seed=1), 50.0)


def test_context_tag_separates_streams():
    system = harmonic_pair()
    config = EstimatorConfig(n_loops=8, n_points=32, seed=3)
    a = estimate_propagator(system, config, 2.0, context_tag=("sweep", 0.0))
    b = estimate_propagator(system, config, 2.0, context_tag=("sweep", 1.0))
    c = estimate_propagator(system, config, 2.0, context_tag=("sweep", 0.0))
    assert a.ln_k != b.ln_k
    assert a.ln_k == c.ln_k


# -------------------------------------------------- reweighted expectations

def test_reweighted_unity_is_exact():
    system = harmonic_pair()
    config = EstimatorConfig(n_loops=6, n_points=32, seed=2, mode="flat",
                             n_tuples=20)
    val = reweighted_expectation(system, config, 2.0,
                                 lambda pos: np.ones(pos[0].shape[0]))
    assert val == 1.0


def test_reweighted_midpoint_symmetry():
    # <x_rel(T/2)> vanishes by symmetry for coincident-origin endpoints
    system = harmonic_pair()
    config = EstimatorConfig(n_loops=40, n_points=64, seed=7, mode="flat",
                             n_tuples=4000)

    def midpoint_separation(pos):
        mid = pos[0].shape[1] // 2
        return pos[0][:, mid, 0] - pos[1][:, mid, 0]

    val = reweighted_expectation(system, config, 2.0, midpoint_separation)
    assert abs(val) < 0.05


def test_reweighted_observable_shape_checked():
    from wlmc import ShapeError

    system = harmonic_pair()
    config = EstimatorConfig(n_loops=4, n_points=16, seed=2, mode="flat",
                             n_tuples=8)
    with pytest.raises(ShapeError):
        reweighted_expectation(system, config, 1.0,
                               lambda pos: np.ones(3))
