import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from fracdual.core import AtomicMeasure, Box, GridFunction
from fracdual.duality import (
    DualitySchedule,
    TestBattery,
    convolve,
    duality_residual,
    extrapolated_limit,
    nested_consistency,
    residual_refinement,
    solve_duality,
    uniqueness_check,
    young_check,
)
from fracdual.exceptions import ExponentError, GridError, ParameterError, ScheduleError, SupportError
from fracdual.kernel import unit_bump
from fracdual.potential import FundamentalSolution, potential_of_measure

BOX = Box.cube(2, 1.0)


def tilted_plane(x):
    return x[:, 0] - 2.0 * x[:, 1]


@pytest.fixture
def bump_test():
    return GridFunction.from_function(BOX, 64, unit_bump(2, 0.5, [0.1, 0.0]))


class TestDualityResidual:
    def test_exact_potential(self, params2d, bump_test):
        report = duality_residual(FundamentalSolution(params2d), AtomicMeasure.dirac(2), bump_test, params2d)
        assert report.rhs > 0
        assert report.residual <= report.excised_bound + 2e-2 * report.rhs

    def test_rhs_linear_in_measure(self, params2d, bump_test):
        u = FundamentalSolution(params2d)
        single = duality_residual(u, AtomicMeasure.dirac(2), bump_test, params2d)
        double = duality_residual(u, AtomicMeasure.dirac(2, weight=2.0), bump_test, params2d)
        assert double.rhs == pytest.approx(2.0 * single.rhs)

    def test_zero_test_function(self, params2d):
        report = duality_residual(
            FundamentalSolution(params2d), AtomicMeasure.dirac(2), GridFunction.zeros(BOX, 16), params2d
        )
        assert (report.lhs, report.rhs, report.residual) == (0.0, 0.0, 0.0)
        assert report.relative == 0.0

    def test_test_function_must_vanish_on_boundary(self, params2d):
        g = GridFunction.from_function(BOX, 16, lambda x: np.ones(len(x)))
        with pytest.raises(SupportError):
            duality_residual(FundamentalSolution(params2d), AtomicMeasure.dirac(2), g, params2d)


class TestResidualRefinement:
    def test_fundamental_solution_converges(self, params2d):
        study = residual_refinement(
            FundamentalSolution(params2d),
            AtomicMeasure.dirac(2),
            unit_bump(2, 0.5),
            params2d,
            Box.cube(2, 1.0),
            test_id="bump",
        )
        assert study.spacings == [1 / 64, 1 / 128, 1 / 256]
        assert all(b < a for a, b in zip(study.relative[:-1], study.relative[1:]))
        assert study.order >= 0.8
        assert study.finest <= 1e-2
        assert study.to_dict()["test_id"] == "bump"

    def test_spacing_must_divide_the_box(self, params2d):
        with pytest.raises(GridError):
            residual_refinement(
                FundamentalSolution(params2d), AtomicMeasure.dirac(2), unit_bump(2, 0.5), params2d, BOX, (0.3, 0.15)
            )

    def test_needs_two_spacings(self, params2d):
        with pytest.raises(ParameterError):
            residual_refinement(
                FundamentalSolution(params2d), AtomicMeasure.dirac(2), unit_bump(2, 0.5), params2d, BOX, (1 / 64,)
            )


class TestBatteryMembers:
    def test_sizes(self):
        assert len(TestBattery(2)) == 20
        assert len(TestBattery(2, include_rough=True)) == 22

    def test_non_negative_and_supported(self):
        battery = TestBattery(2, radius=0.8, seed=4, include_rough=True)
        box = Box.cube(2, 1.0)
        for name, g in battery.on_grid(box, 40):
            assert np.all(g.values >= 0), name
            assert np.any(g.values > 0), name
            outside = np.max(np.abs(g.points()), axis=1) > 0.8
            assert not np.any(g.values.reshape(-1)[outside]), name

    def test_seeded(self):
        a = TestBattery(2, seed=1).on_grid(BOX, 16)
        b = TestBattery(2, seed=1).on_grid(BOX, 16)
        for (_, ga), (_, gb) in zip(a, b):
            np.testing.assert_array_equal(ga.values, gb.values)


class TestSchedule:
    @pytest.mark.parametrize(
        "kwargs",
        [
            {"bandwidths": (0.1, 0.05)},
            {"bandwidths": (0.1, 0.1, 0.05)},
            {"resolutions": (256, 256)},
            {"bandwidths": (0.1, 0.05, 0.01)},
        ],
    )
    def test_invalid(self, kwargs):
        with pytest.raises(ScheduleError):
            DualitySchedule(**kwargs)

    def test_default_resolves_every_level(self):
        assert DualitySchedule().levels() == [(0.05, 256), (0.035, 256), (0.025, 256)]

    def test_single_resolution_broadcasts(self):
        schedule = DualitySchedule(resolutions=(128,), bandwidths=(0.2, 0.1, 0.05))
        assert schedule.levels() == [(0.2, 128), (0.1, 128), (0.05, 128)]


SMALL = DualitySchedule(half_width=1.5, bandwidths=(0.2, 0.1, 0.05), resolutions=(128,))


class TestSolveDuality:
    def test_point_mass(self, params2d):
        solution = solve_duality(AtomicMeasure.dirac(2), params2d, SMALL)
        assert solution.cauchy_ok
        assert solution.eta == pytest.approx(2.0 / 3.0)
        assert len(solution.residuals) == 20
        assert all(r.residual > 0 for r in solution.residuals)
        assert solution.max_relative_residual <= 5e-2
        assert solution.max_relative_error(FundamentalSolution(params2d)) <= 3e-2

    @pytest.mark.slow
    def test_limit_is_unique(self, params2d):
        # the limit and the closed form pair identically with the battery
        solution = solve_duality(AtomicMeasure.dirac(2), params2d, SMALL)
        battery = TestBattery(2).on_grid(Box.cube(2, 1.5), 256)
        report = uniqueness_check(
            solution.limit, FundamentalSolution(params2d), AtomicMeasure.dirac(2), battery, rtol=5e-2
        )
        assert report.duality_equal

    def test_extrapolated_limit_cancels_second_order(self):
        box = Box.cube(2, 1.0)
        u = GridFunction.from_function(box, 16, lambda x: np.cos(np.sum(x, axis=1)))
        c = GridFunction.from_function(box, 16, lambda x: x[:, 0] ** 2)
        coarse, fine = u + 0.2**2 * c, u + 0.1**2 * c
        limit = extrapolated_limit(coarse, fine, 0.2, 0.1)
        np.testing.assert_allclose(limit.values, u.values, atol=1e-12)
        with pytest.raises(ScheduleError):
            extrapolated_limit(fine, coarse, 0.1, 0.2)

    def test_extrapolated_limit_resamples_the_coarse_level(self):
        box = Box.cube(2, 1.0)
        coarse = GridFunction.from_function(box, 16, tilted_plane)
        fine = GridFunction.from_function(box, 32, tilted_plane)
        limit = extrapolated_limit(coarse, fine, 0.2, 0.1)
        np.testing.assert_allclose(limit.values, fine.values, atol=1e-12)

    def test_zero_measure(self, params2d):
        solution = solve_duality(AtomicMeasure.zero(2), params2d, SMALL)
        assert not np.any(solution.u.values)
        assert solution.cauchy_ok and solution.uniform_ok
        assert solution.max_relative_residual == 0.0

    @pytest.mark.parametrize("gamma_, q", [(5.0, 1.5), (0.5, 1.5), (2.0, 1.0), (2.0, 1.7)])
    def test_exponent_ranges(self, params2d, gamma_, q):
        with pytest.raises(ExponentError):
            solve_duality(AtomicMeasure.dirac(2), params2d, SMALL, gamma=gamma_, q=q)

    @pytest.mark.slow
    def test_two_atoms(self, params2d):
        mu = AtomicMeasure.from_atoms([([0.0, 0.0], 1.0), ([0.5, 0.0], 0.5)], 1.0)
        solution = solve_duality(mu, params2d, DualitySchedule(bandwidths=(0.1, 0.05, 0.025)))
        points = np.array([[0.0, 0.6], [-0.5, -0.3], [0.9, 0.5]])
        reference = potential_of_measure(mu, points, params2d)
        np.testing.assert_allclose(solution.limit(points), reference, rtol=2e-2)
        assert solution.max_relative_residual <= 1e-2


class TestUniqueness:
    def test_same_solution(self, params2d):
        battery = TestBattery(2).on_grid(Box.cube(2, 1.5), 64)
        u = FundamentalSolution(params2d, (0.05, 0.05))
        report = uniqueness_check(u, u, AtomicMeasure.dirac(2), battery)
        assert report.duality_equal
        assert report.max_difference == 0.0
        assert report.l1_difference == 0.0

    def test_different_solutions(self, params2d):
        battery = TestBattery(2).on_grid(Box.cube(2, 1.5), 64)
        u = FundamentalSolution(params2d, (0.05, 0.05))
        v = FundamentalSolution(params2d, (0.05, 0.05), weight=1.1)
        report = uniqueness_check(u, v, AtomicMeasure.dirac(2), battery)
        assert not report.duality_equal
        assert report.l1_difference > 0

    def test_mass_one_bump_is_detected(self, params2d):
        # adding a unit-mass bump changes every pairing with a test function it overlaps
        battery = TestBattery(2).on_grid(Box.cube(2, 1.5), 64)
        u = FundamentalSolution(params2d, (0.05, 0.05))
        bump = unit_bump(2, 0.3, [0.1, 0.0])
        report = uniqueness_check(u, lambda x: u(x) + bump(x), AtomicMeasure.dirac(2), battery)
        assert not report.duality_equal
        assert report.l1_difference == pytest.approx(1.0, rel=5e-2)


class TestNestedConsistency:
    def test_pairings_agree(self, params2d):
        mu = AtomicMeasure.from_atoms([([0.0, 0.0], 1.0), ([0.3, 0.2], -0.5)], 1.0)
        report = nested_consistency(mu, params2d, [1.5, 2.0], spacing=0.0625, bandwidth=0.15)
        assert report.pairings.shape == (2, 20)
        assert report.ok

    def test_needs_shared_lattice(self, params2d):
        with pytest.raises(GridError):
            nested_consistency(AtomicMeasure.dirac(2), params2d, [1.5, 1.53], spacing=0.0625, bandwidth=0.15)

    def test_needs_two_boxes(self, params2d):
        with pytest.raises(ParameterError):
            nested_consistency(AtomicMeasure.dirac(2), params2d, [1.5], spacing=0.0625, bandwidth=0.15)


class TestYoung:
    def test_l1_equality(self):
        f = GridFunction.from_function(BOX, 32, lambda x: np.all(np.abs(x) <= 0.5, axis=1).astype(float))
        report = young_check(f, f, 1.0, 1.0)
        assert report.r == 1.0
        assert report.ratio == pytest.approx(1.0, abs=1e-9)

    def test_gaussians_are_strict(self):
        g = GridFunction.from_function(BOX, 64, lambda x: np.exp(-np.sum(x**2, axis=1) / (2 * 0.15**2)))
        report = young_check(g, g, 4.0 / 3.0, 4.0 / 3.0)
        assert report.r == pytest.approx(2.0)
        assert report.ratio == pytest.approx(0.770, abs=1e-2)

    def test_conjugate_exponents_give_sup_norm(self):
        f = GridFunction.from_function(BOX, 16, unit_bump(2, 0.5))
        assert young_check(f, f, 2.0, 2.0).r == math.inf

    @pytest.mark.parametrize("p, q", [(0.5, 2.0), (2.0, 3.0)])
    def test_invalid_exponents(self, p, q):
        f = GridFunction.zeros(BOX, 8)
        with pytest.raises(ExponentError):
            young_check(f, f, p, q)

    def test_convolution_box(self):
        f = GridFunction.zeros(Box.cube(2, 1.0, [0.5, 0.0]), 8)
        g = GridFunction.zeros(Box.cube(2, 1.0, [0.0, -0.25]), 8)
        out = convolve(f, g)
        assert out.resolution == 15
        np.testing.assert_allclose(out.box.center, [0.5, -0.25])

    def test_convolution_on_the_finer_lattice(self):
        f = GridFunction.from_function(BOX, 32, unit_bump(2, 0.4))
        g = GridFunction.from_function(BOX, 64, unit_bump(2, 0.3, [0.2, 0.0]))
        out = convolve(f, g)
        assert out.spacing == pytest.approx(g.spacing)
        assert out.integral() == pytest.approx(f.integral() * g.integral(), rel=2e-2)
        assert convolve(g, f).values.shape == out.values.shape

    @given(
        st.floats(min_value=0.1, max_value=0.5),
        st.floats(min_value=0.1, max_value=0.5),
        st.floats(min_value=-0.4, max_value=0.4),
        st.sampled_from([(1.0, 2.0), (4.0 / 3.0, 4.0 / 3.0), (1.0, 1.0), (1.5, 1.2)]),
    )
    def test_inequality_holds(self, w1, w2, shift, exponents):
        p, q = exponents
        f = GridFunction.from_function(BOX, 32, unit_bump(2, w1, [shift, 0.0]))
        g = GridFunction.from_function(BOX, 32, unit_bump(2, w2, [0.0, shift]))
        assert young_check(f, g, p, q).ratio <= 1.0 + 1e-9
