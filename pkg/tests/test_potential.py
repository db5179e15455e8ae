import math

import numpy as np
import pytest
from scipy.special import gamma

from fracdual.core import AtomicMeasure, Box, FracParams, GridFunction
from fracdual.exceptions import ExponentError, ParameterError, SingularPointError
from fracdual.kernel import MollifierSpec, mollify, unit_bump
from fracdual.potential import (
    ContinuityProfile,
    FundamentalSolution,
    PotentialField,
    check_continuity,
    check_decay,
    check_linfty_bound,
    potential_of_density,
    potential_of_measure,
    potential_on_grid,
    sphere_directions,
    support_ball,
)


class TestAtomicPotential:
    def test_single_point_returns_float(self, params2d):
        value = potential_of_measure(AtomicMeasure.dirac(2), np.array([0.0, 4.0]), params2d)
        assert isinstance(value, float)
        assert value == pytest.approx(params2d.potential_constant * 4.0**-0.5)

    def test_superposition(self, params2d):
        mu = AtomicMeasure.from_atoms([([0.0, 0.0], 1.0), ([0.5, 0.0], -2.0)], 1.0)
        x = np.array([[1.0, 1.0], [-0.3, 0.2]])
        expected = FundamentalSolution(params2d)(x) + FundamentalSolution(params2d, (0.5, 0.0), -2.0)(x)
        np.testing.assert_allclose(potential_of_measure(mu, x, params2d), expected, rtol=1e-12)

    def test_singular_at_atom(self, params2d):
        with pytest.raises(SingularPointError):
            potential_of_measure(AtomicMeasure.dirac(2), np.zeros(2), params2d)
        with pytest.raises(SingularPointError):
            FundamentalSolution(params2d)(np.zeros((1, 2)))

    def test_empty_measure(self, params2d):
        out = potential_of_measure(AtomicMeasure.zero(2), np.ones((3, 2)), params2d)
        assert out.tolist() == [0.0, 0.0, 0.0]


class TestDensityPotential:
    def test_gaussian_matches_closed_form(self, params2d, gaussian2d):
        # (-Delta)^{-s} exp(-|x|^2/2) at 0 is 2^{-s} Gamma(N/2-s) / Gamma(N/2)
        s = params2d.order
        expected = 2.0**-s * gamma(1.0 - s) / gamma(1.0)
        x = gaussian2d.center_of((64, 64))
        assert potential_of_density(gaussian2d, x, params2d) == pytest.approx(expected, rel=2e-2)

    def test_fft_matches_direct_sum(self, params2d):
        rng = np.random.default_rng(3)
        f = GridFunction(Box.cube(2, 1.0), 16, rng.normal(size=(16, 16)))
        direct = potential_of_density(f, f.points(), params2d)
        fast = potential_on_grid(f, params2d)
        np.testing.assert_allclose(fast.values.reshape(-1), direct, rtol=1e-9, atol=1e-10)

    def test_zero_density(self, params2d):
        f = GridFunction.zeros(Box.cube(2, 1.0), 8)
        assert potential_of_density(f, np.zeros(2), params2d) == 0.0
        assert not np.any(potential_on_grid(f, params2d).values)

    def test_field_cache(self, params2d, gaussian2d):
        field = PotentialField(gaussian2d, params2d)
        first = field.value_at([1.0, 2.0])
        assert field.value_at([1.0, 2.0]) == first
        assert len(field.cache) == 1
        with pytest.raises(TypeError):
            field.cache[(0.0, 0.0)] = 1.0

    def test_dimension_mismatch(self, params3d, gaussian2d):
        with pytest.raises(ParameterError):
            PotentialField(gaussian2d, params3d)

    def test_mollified_dirac_matches_fundamental_solution(self, params2d):
        points = sphere_directions(2, 16)
        exact = FundamentalSolution(params2d)(points)
        for eps in (0.05, 0.025):
            f = mollify(AtomicMeasure.dirac(2), MollifierSpec(eps), Box.cube(2, 1.5), 256)
            np.testing.assert_allclose(potential_of_density(f, points, params2d), exact, rtol=2e-2)

    def test_uniform_ball_is_a_monopole_far_away(self):
        params = FracParams.standard(3, 0.8)
        f = GridFunction.from_function(
            Box.cube(3, 1.0), 48, lambda x: (np.linalg.norm(x, axis=1) <= 0.5).astype(float)
        )
        points = 2.5 * sphere_directions(3, 20)
        monopole = f.integral() * params.potential_constant * 2.5 ** -params.kernel_exponent
        np.testing.assert_allclose(potential_of_density(f, points, params), monopole, rtol=1e-2)


class TestPotentialInvariants:
    @pytest.fixture
    def pair(self):
        box = Box.cube(2, 1.0)
        return (
            GridFunction.from_function(box, 32, unit_bump(2, 0.4, [0.2, 0.1])),
            GridFunction.from_function(box, 32, unit_bump(2, 0.3, [-0.3, 0.0])),
        )

    def test_translation_equivariance(self, params2d, pair):
        f, _ = pair
        shift = np.array([0.7, -1.3])
        moved = GridFunction(Box.cube(2, 1.0, shift), 32, f.values)
        x = np.array([[0.1, 0.2], [1.5, -0.4], [3.0, 2.0]])
        np.testing.assert_allclose(
            potential_of_density(moved, x + shift, params2d), potential_of_density(f, x, params2d), rtol=1e-10
        )
        mu = AtomicMeasure.from_atoms([([0.0, 0.0], 1.0), ([0.5, 0.0], -2.0)], 1.0)
        nu = AtomicMeasure.from_atoms([(shift, 1.0), ([0.5 + shift[0], shift[1]], -2.0)], 2.0)
        np.testing.assert_allclose(
            potential_of_measure(nu, x + shift, params2d), potential_of_measure(mu, x, params2d), rtol=1e-10
        )

    def test_positive_for_non_negative_sources(self, params2d, pair):
        f, g = pair
        u = potential_on_grid(f + g, params2d)
        assert np.all(u.values > 0)
        far = np.array([[5.0, 5.0], [-3.0, 0.0]])
        assert np.all(potential_of_density(f, far, params2d) > 0)

    def test_linear(self, params2d, pair):
        f, g = pair
        combined = potential_on_grid(2.0 * f - 0.5 * g, params2d)
        separate = 2.0 * potential_on_grid(f, params2d) - 0.5 * potential_on_grid(g, params2d)
        np.testing.assert_allclose(combined.values, separate.values, rtol=1e-10, atol=1e-12)

    def test_symmetric_pairing(self, params2d, pair):
        # int g (I f) = int f (I g) for the discrete Riesz potential I
        f, g = pair
        assert g.pair(potential_on_grid(f, params2d)) == pytest.approx(
            f.pair(potential_on_grid(g, params2d)), rel=1e-10
        )


@pytest.fixture
def bump():
    return GridFunction.from_function(Box.cube(2, 1.0), 64, unit_bump(2, 0.4))


class TestLinftyBound:
    def test_holds_for_bump(self, params2d, bump):
        points = np.random.default_rng(0).uniform(-1, 1, size=(100, 2))
        report = check_linfty_bound(bump, 2.0, params2d, points)
        assert report.ok
        assert 0 < report.lhs <= report.rhs

    def test_sigma_threshold(self, params2d, bump):
        with pytest.raises(ExponentError):
            check_linfty_bound(bump, 4.0 / 3.0, params2d, np.zeros((1, 2)))

    def test_zero_source(self, params2d):
        report = check_linfty_bound(GridFunction.zeros(Box.cube(2, 1.0), 8), 2.0, params2d, np.zeros((1, 2)))
        assert report == (0.0, 0.0, True)


class TestDecay:
    def test_point_mass_halving_law(self, params2d):
        profile = check_decay(AtomicMeasure.dirac(2), params2d, [2.0, 4.0, 8.0])
        assert profile.ok
        for ratio in profile.halving_ratios():
            assert ratio == pytest.approx(2.0**params2d.kernel_exponent, rel=1e-12)

    def test_bump_halving_law(self, params2d, bump):
        reach = support_ball(bump).radius
        profile = check_decay(bump, params2d, [10 * reach, 20 * reach, 40 * reach])
        assert profile.ok
        for ratio in profile.halving_ratios():
            assert ratio == pytest.approx(2.0**params2d.kernel_exponent, rel=1e-2)

    def test_radii_must_increase(self, params2d):
        with pytest.raises(ParameterError):
            check_decay(AtomicMeasure.dirac(2), params2d, [4.0, 2.0])

    def test_radii_must_leave_support(self, params2d):
        with pytest.raises(ParameterError):
            check_decay(AtomicMeasure.dirac(2, [0.5, 0.0]), params2d, [0.25, 2.0])


def test_continuity_at_cell_centre(params2d, bump):
    profile = check_continuity(bump, bump.center_of((32, 32)), params2d)
    assert profile.cauchy
    assert profile.differences[-1] < profile.differences[0]


def test_continuity_profile_goes_to_zero():
    # a sign change of w(x + t e) - w(x) near the largest offset is not a failure
    profile = ContinuityProfile([0.4, 0.2, 0.1, 0.05, 0.025, 0.0125], [1e-3, 2e-5, 6e-4, 3e-4, 1.5e-4, 7e-5], 1.0)
    assert profile.cauchy
    stuck = ContinuityProfile([0.4, 0.2, 0.1, 0.05], [1e-3, 8e-4, 9e-4, 8e-4], 1.0)
    assert not stuck.cauchy
    assert ContinuityProfile([0.1, 0.05], [1e-17, 3e-17], 1.0).cauchy


@pytest.mark.parametrize("seed", range(10))
def test_continuity_at_random_bump_centres(params2d, seed):
    rng = np.random.default_rng(seed)
    direction = rng.normal(size=2)
    center = 0.05 * rng.uniform() * direction / np.linalg.norm(direction)
    f = GridFunction.from_function(Box.cube(2, 1.0), 64, unit_bump(2, rng.uniform(0.3, 0.5), center))
    index, _ = f.cell_index(center)
    assert check_continuity(f, f.center_of(index[0]), params2d).cauchy


def test_sphere_directions_are_unit_and_deterministic():
    a = sphere_directions(3, 64, seed=1)
    b = sphere_directions(3, 64, seed=1)
    assert a.shape == (64, 3)
    np.testing.assert_allclose(np.linalg.norm(a, axis=1), 1.0)
    np.testing.assert_array_equal(a, b)
    assert math.isclose(float(np.abs(a.mean(axis=0)).max()), 0.0, abs_tol=0.2)
