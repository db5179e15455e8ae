import math

import numpy as np
import pytest

from fracdual.core import Ball, Box, ExponentSpec, GridFunction
from fracdual.exceptions import ExponentError, ParameterError, ScheduleError
from fracdual.kernel import unit_bump
from fracdual.norms import (
    cell_pair_integral,
    check_schedule,
    default_excision_schedule,
    embedding_check,
    full_sobolev_norm,
    excised_quadrature,
    fitted_rate,
    gagliardo_pair_sum,
    gagliardo_seminorm,
    lebesgue_norm,
    regularity_sweep,
)
from fracdual.potential import FundamentalSolution

UNIT = Ball.centered(2, 1.0)


def ones(x):
    return np.ones(len(x))


def first_coordinate(x):
    return np.asarray(x)[:, 0]


class TestExcisedQuadrature:
    def test_volume(self):
        quad = excised_quadrature(UNIT, excision=1.0 / 64)
        expected = math.pi * (1.0 - (1.0 / 64) ** 2)
        assert quad.weights.sum() == pytest.approx(expected, rel=2e-2)

    def test_dyadic_groups(self):
        quad = excised_quadrature(UNIT, excision=1.0 / 64)
        assert quad.outer_excision == pytest.approx(0.5)
        assert quad.group_count == 6
        assert quad.groups_for(0.25) == 2
        assert quad.groups_for(1.0 / 64) == 6
        with pytest.raises(ScheduleError):
            quad.groups_for(0.3)

    def test_excision_must_fit(self):
        with pytest.raises(ParameterError):
            excised_quadrature(UNIT, excision=1.0)


class TestNorms:
    def test_lebesgue_of_constant(self):
        assert lebesgue_norm(ones, 2.0, UNIT) == pytest.approx(math.sqrt(math.pi), rel=2e-2)

    def test_lebesgue_exponent_range(self):
        with pytest.raises(ExponentError):
            lebesgue_norm(ones, 0.5, UNIT)

    def test_seminorm_of_constant_vanishes(self):
        assert gagliardo_seminorm(ones, 0.5, 2.0, UNIT, resolution=24) == 0.0

    def test_seminorm_is_homogeneous(self):
        bump = unit_bump(2, 0.5)
        single = gagliardo_seminorm(bump, 0.5, 2.0, UNIT, resolution=24)
        double = gagliardo_seminorm(lambda x: 2.0 * bump(x), 0.5, 2.0, UNIT, resolution=24)
        assert single > 0
        assert double == pytest.approx(2.0 * single, rel=1e-10)

    def test_seminorm_ignores_constants(self):
        bump = unit_bump(2, 0.5, [0.1, -0.2])
        base = gagliardo_seminorm(bump, 0.6, 1.5, UNIT, resolution=24)
        shifted = gagliardo_seminorm(lambda x: bump(x) + 3.0, 0.6, 1.5, UNIT, resolution=24)
        assert shifted == pytest.approx(base, rel=1e-10)

    def test_norms_grow_as_excision_shrinks(self, params2d):
        u = FundamentalSolution(params2d)
        radii = default_excision_schedule(UNIT, 5)
        lebesgue = [lebesgue_norm(u, 3.0, UNIT, e, resolution=24, shell_resolution=8) for e in radii]
        sobolev = [gagliardo_seminorm(u, 0.5, 1.5, UNIT, e, resolution=24, shell_resolution=8) for e in radii]
        assert all(b >= a for a, b in zip(lebesgue[:-1], lebesgue[1:]))
        assert all(b >= a for a, b in zip(sobolev[:-1], sobolev[1:]))

    def test_triangle_inequality(self):
        rng = np.random.default_rng(5)
        for _ in range(100):
            u = unit_bump(2, rng.uniform(0.2, 0.6), rng.uniform(-0.4, 0.4, size=2))
            v = unit_bump(2, rng.uniform(0.2, 0.6), rng.uniform(-0.4, 0.4, size=2))
            a = rng.uniform(-2.0, 2.0)

            def w(x, u=u, v=v, a=a):
                return u(x) + a * v(x)

            for norm in (
                lambda f: lebesgue_norm(f, 1.5, UNIT, resolution=16),
                lambda f: gagliardo_seminorm(f, 0.5, 1.5, UNIT, resolution=16),
            ):
                assert norm(w) <= norm(u) + abs(a) * norm(v) + 1e-12

    def test_seminorm_of_linear_function(self):
        # int int_{D x D} (x_1 - y_1)^2 / |x - y|^3 = (1/2) int int 1/|x - y| = 8 pi / 3 on the unit disc
        exact = math.sqrt(8 * math.pi / 3)
        assert gagliardo_seminorm(first_coordinate, 0.5, 2.0, UNIT) == pytest.approx(exact, rel=3e-2)

        fine = GridFunction.zeros(Box.cube(2, 1.0), 96)
        nodes = fine.points()
        nodes = nodes[UNIT.contains(nodes)]
        weights = np.full(len(nodes), fine.cell_volume)
        brute = gagliardo_pair_sum(nodes[:, 0], nodes, weights, 0.5, 2.0) ** 0.5
        assert brute == pytest.approx(exact, rel=3e-2)
        assert gagliardo_seminorm(first_coordinate, 0.5, 2.0, UNIT, resolution=24) == pytest.approx(brute, rel=5e-2)

    @pytest.mark.parametrize("eta", [0.0, 1.0])
    def test_sobolev_order_range(self, eta):
        with pytest.raises(ExponentError):
            gagliardo_seminorm(ones, eta, 2.0, UNIT)

    def test_full_norm_adds_both_parts(self):
        bump = unit_bump(2, 0.5)
        assert full_sobolev_norm(ones, 0.5, 2.0, UNIT, resolution=24) == pytest.approx(
            lebesgue_norm(ones, 2.0, UNIT, 0.0, resolution=24)
        )
        total = full_sobolev_norm(bump, 0.5, 2.0, UNIT, resolution=24)
        parts = lebesgue_norm(bump, 2.0, UNIT, 0.0, resolution=24) + gagliardo_seminorm(
            bump, 0.5, 2.0, UNIT, 0.0, resolution=24
        )
        assert total == pytest.approx(parts, rel=1e-12)

    def test_full_norm_with_excision(self, params2d):
        u = FundamentalSolution(params2d, (0.2, 0.0))
        kwargs = dict(excision=1.0 / 32, singular_point=[0.2, 0.0])
        total = full_sobolev_norm(u, 0.5, 1.5, UNIT, resolution=24, **kwargs)
        parts = lebesgue_norm(u, 1.5, UNIT, resolution=24, **kwargs) + gagliardo_seminorm(
            u, 0.5, 1.5, UNIT, resolution=24, **kwargs
        )
        assert total == pytest.approx(parts, rel=1e-12)

    def test_cell_pair_integral_smooth_case(self):
        # two coordinates, each with mean (x_i - y_i)^2 = 1/6
        assert cell_pair_integral(2, 2.0) == pytest.approx(1.0 / 3.0, rel=1e-10)

    def test_embedding(self):
        report = embedding_check(unit_bump(2, 0.4), 0.5, 2.0, UNIT, resolution=32)
        assert report.gamma_bar == pytest.approx(4.0)
        assert 0 < report.ratio < math.inf
        zero = embedding_check(lambda x: np.zeros(len(x)), 0.5, 2.0, UNIT, resolution=16)
        assert zero.ratio == 0.0


class TestSchedule:
    def test_default(self):
        radii = default_excision_schedule(UNIT, 4)
        assert radii == [0.25, 0.125, 0.0625, 0.03125]
        assert check_schedule(radii, UNIT) == radii

    @pytest.mark.parametrize(
        "schedule",
        [[0.25, 0.125], [0.25, 0.1, 0.05], [0.75, 0.375, 0.1875], [0.25, 0.125, -0.0625]],
    )
    def test_malformed(self, schedule):
        with pytest.raises(ScheduleError):
            check_schedule(schedule, UNIT)

    def test_fitted_rate(self):
        assert fitted_rate([1.0, 1.0, 1.0]) == pytest.approx(0.0)
        assert fitted_rate([1.0, 0.5, 0.25]) == pytest.approx(1.0)
        assert fitted_rate([1.0, 0.0]) == math.inf


class TestRegularitySweep:
    def test_lebesgue_classification(self, params2d):
        specs = [ExponentSpec.lebesgue(3.0), ExponentSpec.lebesgue(4.0), ExponentSpec.lebesgue(4.5)]
        reports = regularity_sweep(FundamentalSolution(params2d), specs, UNIT, params=params2d)
        flags = [r.divergence_flag for r in reports]
        assert flags == [False, True, True]
        assert all(r.passed for r in reports)
        assert reports[0].to_dict()["spec"] == "r=3"

    def test_zero_field_never_diverges(self):
        specs = [ExponentSpec.lebesgue(4.0), ExponentSpec.sobolev(0.7, 1.9)]
        reports = regularity_sweep(lambda x: np.zeros(len(x)), specs, UNIT, resolution=24, shell_resolution=8)
        assert not any(r.divergence_flag for r in reports)

    @pytest.mark.slow
    def test_sobolev_classification(self, params2d):
        specs = [ExponentSpec.sobolev_from_q(params2d, q) for q in (1.2, 1.5, 1.7, 1.9)]
        reports = regularity_sweep(FundamentalSolution(params2d), specs, UNIT, params=params2d)
        assert [r.divergence_flag for r in reports] == [False, False, True, True]
        assert all(r.passed for r in reports)


def test_pair_sum_matches_brute_force():
    grid = GridFunction.zeros(Box.cube(3, 1.0), 16)
    nodes = grid.points()
    values = np.sin(3 * nodes[:, 0]) + nodes[:, 1] * nodes[:, 2]
    weights = np.full(len(nodes), grid.cell_volume)
    eta, p = 0.4, 1.5

    brute = 0.0
    for i in range(len(nodes)):
        dist = np.linalg.norm(nodes - nodes[i], axis=1)
        dist[i] = np.inf
        brute += float(np.sum(np.abs(values - values[i]) ** p * dist ** (-(3 + eta * p))))
    brute *= grid.cell_volume**2

    assert gagliardo_pair_sum(values, nodes, weights, eta, p) == pytest.approx(brute, rel=1e-12)
