"""Potential forms, term plumbing, and factory systems.

Values are checked against hand-evaluated closed forms at specific points,
and against structural invariants (translation/rotation invariance,
exchange symmetry, limits) that the definitions must satisfy.
"""

import math

import numpy as np
import pytest
from scipy.special import erfc

from wlmc import ConfigError, ShapeError, SingularityError
from wlmc.potentials import (
    BareCoulomb,
    ErfcEffective,
    GaussianWell,
    Harmonic,
    PotentialSpec,
    PotentialTerm,
    SoftCoulomb,
    SquareWell,
    compile_terms,
    make_3d_confined_exciton,
    make_exciton_sqwell,
    make_trion_erfc,
    make_trion_soft,
)

SQRT_PI_OVER_2 = math.sqrt(math.pi / 2.0)


def pair_value(form, y):
    """Value of a pair term at separation vector y."""
    term = PotentialTerm(form, (0, 1))
    x = np.stack([np.asarray(y, dtype=float), np.zeros(len(y))])
    return float(term.value(x))


def test_soft_coulomb_closed_form():
    # -alpha / sqrt(r^2 + d^2)
    assert pair_value(SoftCoulomb(alpha=1.0, d=2.0), [0.0]) == -0.5
    assert pair_value(SoftCoulomb(alpha=1.0, d=1.0), [0.0]) == -1.0
    v = pair_value(SoftCoulomb(alpha=2.0, d=1.0), [3.0, 4.0])
    assert abs(v - (-2.0 / math.sqrt(26.0))) < 1e-15


def test_soft_coulomb_repulsive_sign():
    v = pair_value(SoftCoulomb(alpha=1.0, d=1.0, sign=-1.0), [0.0])
    assert v == 1.0


def test_bare_coulomb_closed_form_and_singularity():
    assert pair_value(BareCoulomb(alpha=3.0), [2.0, 0.0]) == -1.5
    with pytest.raises(SingularityError):
        pair_value(BareCoulomb(alpha=1.0), [0.0, 0.0])


def test_soft_approaches_bare_as_d_shrinks():
    y = [0.7, 0.3]
    bare = pair_value(BareCoulomb(alpha=1.0), y)
    for d, tol in ((1e-2, 1e-4), (1e-4, 1e-8)):
        soft = pair_value(SoftCoulomb(alpha=1.0, d=d), y)
        assert abs(soft - bare) / abs(bare) < tol


def test_harmonic_radial_and_constant_split():
    form = Harmonic(mu=0.5, omega=2.0, d=3.0)
    # radial is the full pointwise value (mu w^2 / 2)(r^2 + d^2); the
    # constant property exposes the d^2 part for analytic factoring
    assert form.constant == 0.5 * 0.5 * 4.0 * 9.0
    assert float(form.radial(np.asarray(4.0))) == form.constant + 4.0
    assert pair_value(form, [2.0]) == form.constant + 4.0
    assert form.prefactor == 0.5 * 0.5 * 4.0


def test_erfc_effective_closed_form():
    # -(sqrt(pi/2)/d) erfcx(r / (sqrt(2) d)); at r=0 erfcx(0)=1
    assert abs(pair_value(ErfcEffective(d=1.0), [0.0]) + SQRT_PI_OVER_2) \
        < 1e-15
    d, r = 0.8, 1.7
    expected = -(SQRT_PI_OVER_2 / d) * math.exp(r**2 / (2 * d**2)) \
        * erfc(r / (math.sqrt(2.0) * d))
    assert abs(pair_value(ErfcEffective(d=d), [r]) - expected) < 1e-12


def test_erfc_effective_attractive_and_monotone():
    form = ErfcEffective(d=1.0)
    values = [pair_value(form, [r]) for r in (0.0, 0.5, 1.0, 2.0, 4.0)]
    assert all(v < 0.0 for v in values)
    assert all(a < b for a, b in zip(values, values[1:]))


def test_square_well_strict_interior():
    term = PotentialTerm(SquareWell(v0=-2.0, half_widths=(0.5,)), (0,))
    val = lambda x: float(term.value(np.array([[x]])))
    assert val(0.49) == -2.0
    assert val(0.51) == 0.0
    assert val(0.5) == 0.0  # boundary excluded
    assert val(-0.49) == -2.0


def test_square_well_center_and_anisotropy():
    form = SquareWell(v0=-1.0, half_widths=(1.0, 0.25), center=(0.0, 1.0))
    term = PotentialTerm(form, (0,))
    val = lambda p: float(term.value(np.array([p])))
    assert val([0.9, 1.2]) == -1.0
    assert val([0.9, 1.3]) == 0.0
    assert val([1.1, 1.0]) == 0.0


def test_gaussian_well_values():
    term = PotentialTerm(GaussianWell(v0=-3.0, lam=0.5), (0,))
    val = lambda p: float(term.value(np.array([p])))
    assert val([0.0, 0.0]) == -3.0
    assert abs(val([1.0, 0.0]) - (-3.0 * math.exp(-0.5))) < 1e-15


def test_pair_terms_translation_invariant():
    spec = make_trion_soft(alpha=1.0, d=1.0, dimension=2)
    assert spec.is_translation_invariant()
    gen = np.random.default_rng(1)
    x = gen.normal(size=(5, 3, 2))
    shift = gen.normal(size=(1, 1, 2))
    assert np.allclose(spec.evaluate(x), spec.evaluate(x + shift),
                       rtol=0.0, atol=1e-12)


def test_central_terms_rotation_invariant():
    spec = make_trion_soft(alpha=1.0, d=1.0, dimension=2)
    theta = 0.7
    rot = np.array([[math.cos(theta), -math.sin(theta)],
                    [math.sin(theta), math.cos(theta)]])
    gen = np.random.default_rng(2)
    x = gen.normal(size=(4, 3, 2))
    assert np.allclose(spec.evaluate(x), spec.evaluate(x @ rot.T),
                       rtol=0.0, atol=1e-12)


def test_trion_hole_exchange_symmetry():
    for spec in (make_trion_soft(alpha=1.0, d=0.8, dimension=2),
                 make_trion_erfc(d=0.8, dimension=2)):
        gen = np.random.default_rng(3)
        x = gen.normal(size=(6, 3, 2))
        swapped = x[:, [0, 2, 1], :]
        assert np.allclose(spec.evaluate(x), spec.evaluate(swapped),
                           rtol=0.0, atol=1e-12)


def test_trion_coincident_values():
    # 2 attractive e-h + 1 repulsive h-h at zero separation
    origin = np.zeros((3, 2))
    soft = make_trion_soft(alpha=1.0, d=1.0, dimension=2)
    assert abs(float(soft.evaluate(origin)) - (-1.0)) < 1e-15
    erfc_spec = make_trion_erfc(d=1.0, dimension=2)
    assert abs(float(erfc_spec.evaluate(origin)) - (-SQRT_PI_OVER_2)) < 1e-12


def test_exciton_sqwell_dimension_follows_ly():
    spec_1d = make_exciton_sqwell(ve=-4.0, vh=-2.0, lx=2.0)
    assert spec_1d.dimension == 1 and spec_1d.n_particles == 2
    spec_2d = make_exciton_sqwell(ve=-4.0, vh=-2.0, lx=2.0, ly=1.0)
    assert spec_2d.dimension == 2
    assert not spec_2d.is_translation_invariant()


def test_exciton_sqwell_values_by_hand():
    spec = make_exciton_sqwell(ve=-4.0, vh=-2.0, lx=2.0, alpha=1.0, d=1.0)
    # both particles inside the well, separation 1: -4 - 2 - 1/sqrt(2)
    x = np.array([[0.5], [-0.5]])
    expected = -4.0 - 2.0 - 1.0 / math.sqrt(2.0)
    assert abs(float(spec.evaluate(x)) - expected) < 1e-14
    # electron outside (half-width is lx/2 = 1)
    x_out = np.array([[1.5], [-0.5]])
    expected_out = -2.0 - 1.0 / math.sqrt(5.0)
    assert abs(float(spec.evaluate(x_out)) - expected_out) < 1e-14


def test_3d_confined_exciton_structure():
    spec = make_3d_confined_exciton(alpha=1.0, ve=-10.0, vh=-8.0, lz=1.0,
                                    d=2.0)
    assert spec.dimension == 3 and spec.has_bare_coulomb()
    # wells centred at z = -d/2 (electron) and z = +d/2 (hole), width lz
    x = np.array([[0.3, -0.2, -1.0], [0.1, 0.4, 1.0]])
    r = np.linalg.norm(x[0] - x[1])
    expected = -10.0 - 8.0 - 1.0 / r
    assert abs(float(spec.evaluate(x)) - expected) < 1e-14
    # electron out of its slab in z
    x_out = np.array([[0.3, -0.2, -0.4], [0.1, 0.4, 1.0]])
    r_out = np.linalg.norm(x_out[0] - x_out[1])
    assert abs(float(spec.evaluate(x_out)) - (-8.0 - 1.0 / r_out)) < 1e-14
    # transverse (x, y) motion is unconfined: shifting x/y of both leaves
    # the wells alone
    shift = x + np.array([[5.0, -7.0, 0.0]])
    assert abs(float(spec.evaluate(shift)) - expected) < 1e-14


def test_spec_validates_particle_indices_and_shape():
    with pytest.raises(ConfigError):
        PotentialSpec(n_particles=2, dimension=1, terms=(
            PotentialTerm(SoftCoulomb(alpha=1.0, d=1.0), (0, 2)),
        ))
    spec = make_trion_soft(alpha=1.0, d=1.0, dimension=2)
    with pytest.raises(ShapeError):
        spec.evaluate(np.zeros((2, 2)))  # wrong particle count


def test_compile_terms_routing():
    spec = make_3d_confined_exciton(alpha=1.0, ve=-10.0, vh=-10.0, lz=1.0,
                                    d=2.0)
    plain = compile_terms(spec, smoothing=False)
    smoothed = compile_terms(spec, smoothing=True)
    routes = sorted(d.route for d in plain)
    assert routes == ["central_pair", "well_single", "well_single"]
    routes_s = sorted(d.route for d in smoothed)
    assert routes_s == ["smoothed_pair", "well_single", "well_single"]
    # soft terms never pick up the smoothed route
    soft = make_trion_soft(alpha=1.0, d=1.0, dimension=2)
    assert sorted(d.route for d in compile_terms(soft, smoothing=True)) \
        == ["central_pair"] * 3


def test_reversed_pair_order_same_central_value():
    # central pair terms depend on |y| only, so particle order is irrelevant
    form = SoftCoulomb(alpha=1.0, d=1.0)
    x = np.array([[0.7, -0.1], [-0.2, 0.4]])
    a = PotentialTerm(form, (0, 1)).value(x)
    b = PotentialTerm(form, (1, 0)).value(x)
    assert float(a) == float(b)
