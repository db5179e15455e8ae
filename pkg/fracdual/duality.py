"""
Duality solutions: the pairing int u g = int w_g dmu, the mollify-solve-converge
pipeline, uniqueness against a test battery, nested-box consistency and the
discrete Young inequality.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np
from scipy.signal import fftconvolve

from .core import (
    AtomicMeasure,
    Ball,
    Box,
    FracParams,
    GridFunction,
    as_points,
    compact_embedding_limit,
    critical_exponents,
    sphere_area,
)
from .exceptions import ExponentError, GridError, ParameterError, ScheduleError, SupportError
from .fraclap import boundary_layer
from .kernel import MollifierProfile, MollifierSpec, cutoff, mollify
from .norms import full_sobolev_norm, lebesgue_norm
from .potential import potential_of_density, potential_on_grid, sphere_directions

logger = logging.getLogger(__name__)

Field = Callable[[np.ndarray], np.ndarray]


# ============================================================
# Pairing
# ============================================================


@dataclass(frozen=True)
class DualityResidualReport:
    test_id: str
    spacing: float
    lhs: float
    rhs: float
    residual: float
    excised_bound: float = 0.0

    @property
    def relative(self) -> float:
        return self.residual / abs(self.rhs) if self.rhs else self.residual

    def to_dict(self) -> dict:
        return {
            "test_id": self.test_id,
            "spacing": self.spacing,
            "lhs": self.lhs,
            "rhs": self.rhs,
            "residual": self.residual,
            "excised_bound": self.excised_bound,
        }


def _check_support(g: GridFunction, rtol: float = 1e-12) -> None:
    edge, _ = boundary_layer(g)
    scale = float(np.max(np.abs(g.values)))
    if scale > 0 and np.max(np.abs(edge)) > rtol * scale:
        raise SupportError("test function does not vanish on the boundary layer of its box")


def duality_residual(
    u: Field,
    mu: AtomicMeasure,
    g: GridFunction,
    params: FracParams,
    test_id: str = "g",
    excision: Optional[float] = None,
) -> DualityResidualReport:
    """
    lhs = int u g by midpoint quadrature, rhs = sum_i w_i w_g(y_i) with w_g
    the Riesz potential of g.

    Cells whose centre lies within excision (default one cell) of an atom
    are left out of lhs; excised_bound bounds what they would add when u
    carries the atomic Riesz singularity.
    """
    _check_support(g)
    h = g.spacing
    radius = h if excision is None else float(excision)
    flat = g.values.reshape(-1)
    if not np.any(flat):
        return DualityResidualReport(test_id, h, 0.0, 0.0, 0.0, 0.0)

    support = np.flatnonzero(flat)
    centres = g.points()[support]
    keep = np.ones(support.size, dtype=bool)
    if radius > 0 and len(mu):
        dist = np.linalg.norm(centres[:, None, :] - mu.points[None, :, :], axis=2)
        keep = np.all(dist >= radius, axis=1)
    u_values = np.asarray(u(centres[keep]), dtype=float)
    lhs = float(np.sum(u_values * flat[support][keep]) * g.cell_volume)

    rhs = 0.0
    if len(mu):
        rhs = float(np.dot(mu.weights, potential_of_density(g, mu.points, params)))

    bound = 0.0
    if not np.all(keep):
        reach = radius + 0.5 * math.sqrt(g.dim) * h
        s = params.order
        ball_integral = params.potential_constant * sphere_area(g.dim) * reach ** (2 * s) / (2 * s)
        bound = float(np.max(np.abs(flat[support][~keep]))) * mu.total_variation * ball_integral
    return DualityResidualReport(test_id, h, lhs, rhs, abs(lhs - rhs), bound)


@dataclass(frozen=True)
class ResidualRefinement:
    test_id: str
    spacings: List[float]
    relative: List[float]
    order: float

    @property
    def finest(self) -> float:
        return self.relative[-1]

    def to_dict(self) -> dict:
        return {"test_id": self.test_id, "spacings": self.spacings, "relative": self.relative, "order": self.order}


def residual_refinement(
    u: Field,
    mu: AtomicMeasure,
    g: Field,
    params: FracParams,
    box: Box,
    spacings: Sequence[float] = (1 / 64, 1 / 128, 1 / 256),
    test_id: str = "g",
) -> ResidualRefinement:
    """
    Relative duality residual of u against g sampled at each spacing, with the
    observed order from a log-log fit. Spacings must divide the box width.
    """
    if len(spacings) < 2:
        raise ParameterError("a refinement study needs at least two spacings")
    relative = []
    for h in spacings:
        cells = 2.0 * box.half_width / h
        if abs(cells - round(cells)) > 1e-9:
            raise GridError(f"spacing {h:g} does not divide the box width {2 * box.half_width:g}")
        grid = GridFunction.from_function(box, int(round(cells)), g)
        report = duality_residual(u, mu, grid, params, test_id=test_id)
        relative.append(report.relative)
        logger.debug("residual %s at h=%g: %.3g", test_id, h, report.relative)
    values = np.maximum(np.asarray(relative), np.finfo(float).tiny)
    order = float(np.polyfit(np.log(spacings), np.log(values), 1)[0])
    return ResidualRefinement(test_id, [float(h) for h in spacings], relative, order)


# ============================================================
# Test battery
# ============================================================


def _tensor_bump(center: np.ndarray, width: float) -> Field:
    def field_(points: np.ndarray) -> np.ndarray:
        t = (as_points(points, center.size) - center) / width
        inside = np.all(np.abs(t) < 1.0, axis=1)
        values = np.prod((1.0 - np.minimum(t**2, 1.0)) ** 3, axis=1)
        return np.where(inside, values, 0.0)

    return field_


def _cosine_noise(dim: int, rng: np.random.Generator, scale: float, modes: int = 8) -> Field:
    """Sum of random low-frequency cosines, normalised to lie in [-1, 1]"""
    frequencies = rng.normal(size=(modes, dim)) * (2.0 / scale)
    phases = rng.uniform(0.0, 2.0 * np.pi, size=modes)
    amplitudes = rng.normal(size=modes)
    bound = float(np.sum(np.abs(amplitudes)))

    def field_(points: np.ndarray) -> np.ndarray:
        pts = as_points(points, dim)
        return np.cos(pts @ frequencies.T + phases) @ amplitudes / bound

    return field_


@dataclass
class TestBattery:
    """
    Fixed, seeded family of non-negative test functions supported in the cube
    [-radius, radius]^N: tensor bumps at 5 centres x 2 widths, then 10 smooth
    noise fields under a radial cut-off; include_rough adds a cone and a ball
    indicator.
    """

    __test__ = False

    dim: int
    radius: float = 0.8
    seed: int = 0
    include_rough: bool = False
    members: List[Tuple[str, Field]] = field(init=False)

    def __post_init__(self):
        rng = np.random.default_rng(self.seed)
        R = self.radius
        centers = [np.zeros(self.dim)]
        for axis in range(min(2, self.dim)):
            for sign in (1.0, -1.0):
                c = np.zeros(self.dim)
                c[axis] = sign * 0.375 * R
                centers.append(c)
        members: List[Tuple[str, Field]] = []
        for width in (0.3125 * R, 0.625 * R):
            for k, c in enumerate(centers):
                members.append((f"bump{k}_w{width:.4g}", _tensor_bump(c, width)))
        envelope = cutoff(Ball.centered(self.dim, 0.5 * R), 0.5 * R)
        for k in range(10):
            noise = _cosine_noise(self.dim, rng, R)
            members.append((f"noise{k}", self._modulated(envelope, noise)))
        if self.include_rough:
            members.append(("cone", self._cone(0.6 * R)))
            members.append(("indicator", self._indicator(0.5 * R)))
        self.members = members

    @staticmethod
    def _modulated(envelope: Field, noise: Field) -> Field:
        return lambda points: envelope(points) * (1.0 + 0.5 * noise(points))

    def _cone(self, width: float) -> Field:
        return lambda points: np.maximum(0.0, 1.0 - np.linalg.norm(as_points(points, self.dim), axis=1) / width)

    def _indicator(self, width: float) -> Field:
        return lambda points: (np.linalg.norm(as_points(points, self.dim), axis=1) <= width).astype(float)

    def __len__(self) -> int:
        return len(self.members)

    def __iter__(self):
        return iter(self.members)

    def on_grid(self, box: Box, resolution: int) -> List[Tuple[str, GridFunction]]:
        return [(name, GridFunction.from_function(box, resolution, g)) for name, g in self.members]


# ============================================================
# Existence pipeline
# ============================================================


@dataclass(frozen=True)
class DualitySchedule:
    half_width: float = 1.5
    bandwidths: Tuple[float, ...] = (0.05, 0.035, 0.025)
    resolutions: Tuple[int, ...] = (256, 256, 256)
    profile: MollifierProfile = MollifierProfile.GAUSSIAN_TRUNCATED

    def __post_init__(self):
        if len(self.bandwidths) < 3:
            raise ScheduleError("a duality schedule needs at least 3 levels")
        if len(self.resolutions) not in (1, len(self.bandwidths)):
            raise ScheduleError("give one resolution or one per level")
        if any(b >= a for a, b in zip(self.bandwidths[:-1], self.bandwidths[1:])):
            raise ScheduleError("mollifier bandwidths must be strictly decreasing")
        for eps, n in self.levels():
            h = 2.0 * self.half_width / n
            if eps < 2 * h:
                raise ScheduleError(f"bandwidth {eps:g} is below two cells of the {n}-point grid")

    def levels(self) -> List[Tuple[float, int]]:
        res = self.resolutions if len(self.resolutions) > 1 else self.resolutions * len(self.bandwidths)
        return list(zip(self.bandwidths, res))

    def box(self, dim: int) -> Box:
        return Box.cube(dim, self.half_width)


@dataclass
class DualitySolution:
    u: GridFunction
    limit: GridFunction
    levels: List[GridFunction]
    bandwidths: List[float]
    gamma: float
    eta: float
    q: float
    cauchy_differences: List[float]
    sobolev_norms: List[float]
    residuals: List[DualityResidualReport]
    cauchy_ok: bool
    uniform_ok: bool

    @property
    def max_relative_residual(self) -> float:
        return max((r.relative for r in self.residuals), default=0.0)

    def max_relative_error(
        self, reference: Field, inner: float = 0.2, outer: float = 1.0, shells: int = 9, samples: int = 64
    ) -> float:
        """Largest |limit - ref| / |ref| over sampled spheres inner <= |x| <= outer"""
        directions = sphere_directions(self.limit.dim, samples)
        worst = 0.0
        for radius in np.linspace(inner, outer, shells):
            pts = radius * directions
            ref = np.asarray(reference(pts), dtype=float)
            err = np.abs(self.limit(pts) - ref)
            worst = max(worst, float(np.max(err / np.maximum(np.abs(ref), np.finfo(float).tiny))))
        return worst


def extrapolated_limit(coarse: GridFunction, fine: GridFunction, eps_coarse: float, eps_fine: float) -> GridFunction:
    """
    Richardson estimate of lim u_eps from two levels, for u_eps = u + c eps^2 + O(eps^4).
    The coarse level is resampled onto the fine grid when the grids differ.
    """
    if eps_fine >= eps_coarse:
        raise ScheduleError("the fine level needs the smaller bandwidth")
    if coarse.resolution != fine.resolution or coarse.box.half_width != fine.box.half_width:
        coarse = GridFunction.from_function(fine.box, fine.resolution, coarse)
    a, b = eps_coarse**2, eps_fine**2
    return fine.with_values((a * fine.values - b * coarse.values) / (a - b))


def _norm_focus(mu: AtomicMeasure, ball: Ball, schedule: DualitySchedule) -> dict:
    """Refine norm quadratures around the heaviest atom down to an eighth of the smallest bandwidth"""
    if not len(mu) or mu.is_zero():
        return {}
    atom = mu.points[int(np.argmax(np.abs(mu.weights)))]
    excision = min(schedule.bandwidths) / 8.0
    if not ball.contains(atom[None, :])[0] or excision >= ball.radius:
        return {}
    return {"excision": excision, "singular_point": atom}


def solve_duality(
    mu: AtomicMeasure,
    params: FracParams,
    schedule: Optional[DualitySchedule] = None,
    ball: Optional[Ball] = None,
    gamma: float = 2.0,
    q: float = 1.5,
    battery: Optional[TestBattery] = None,
    norm_resolution: Optional[int] = None,
) -> DualitySolution:
    """
    u_n = Riesz potential of the mollified measure along the schedule, with
    Cauchy differences in L^gamma(B_R), W^{eta,q}(B_R) bounds and the duality
    residuals of the extrapolated limit against the battery.

    Norms resolve the bandwidth scale with dyadic shells around the heaviest
    atom. The battery is sampled on a lattice offset from the solution grid.
    """
    schedule = schedule or DualitySchedule()
    ball = ball or Ball.centered(params.dim, 1.0)
    if gamma >= compact_embedding_limit(params) or gamma < 1:
        raise ExponentError(
            f"strong convergence needs 1 <= gamma < {compact_embedding_limit(params):.6g}, got {gamma}"
        )
    critical = critical_exponents(params)
    if not (1 < q < critical.q_star):
        raise ExponentError(f"q must lie in (1, {critical.q_star:.6g}), got {q}")
    eta = critical.eta_of(q)
    box = schedule.box(params.dim)

    levels: List[GridFunction] = []
    for eps, resolution in schedule.levels():
        f_n = mollify(mu, MollifierSpec(eps, schedule.profile), box, resolution)
        levels.append(potential_on_grid(f_n, params))
        logger.info("duality level eps=%g on %d^%d grid", eps, resolution, params.dim)

    focus = _norm_focus(mu, ball, schedule)
    differences = [
        lebesgue_norm(_difference(fine, coarse), gamma, ball, resolution=norm_resolution, **focus)
        for coarse, fine in zip(levels[:-1], levels[1:])
    ]
    cauchy_ok = all(b < a for a, b in zip(differences[:-1], differences[1:])) or not any(differences)
    if not cauchy_ok:
        logger.warning("mollified potentials are not Cauchy in L^%g; the grid may be under-resolved", gamma)

    norms = [full_sobolev_norm(u_n, eta, q, ball, resolution=norm_resolution, **focus) for u_n in levels]
    positive = [v for v in norms if v > 0]
    uniform_ok = not positive or max(positive) <= 1.25 * min(positive)
    if not uniform_ok:
        logger.warning("W^{%.3g,%.3g} norms vary by more than 25%% across the schedule", eta, q)

    finest = levels[-1]
    limit = extrapolated_limit(levels[-2], finest, schedule.bandwidths[-2], schedule.bandwidths[-1])
    battery = battery or TestBattery(params.dim, radius=min(0.8, 0.8 * schedule.half_width))
    residuals = [
        duality_residual(limit, mu, g, params, test_id=name, excision=0.0)
        for name, g in battery.on_grid(finest.box, finest.resolution + 1)
    ]
    return DualitySolution(
        u=finest,
        limit=limit,
        levels=levels,
        bandwidths=list(schedule.bandwidths),
        gamma=gamma,
        eta=eta,
        q=q,
        cauchy_differences=differences,
        sobolev_norms=norms,
        residuals=residuals,
        cauchy_ok=cauchy_ok,
        uniform_ok=uniform_ok,
    )


def _difference(a: Field, b: Field) -> Field:
    return lambda points: a(points) - b(points)


# ============================================================
# Uniqueness and nested consistency
# ============================================================


class UniquenessReport(NamedTuple):
    max_difference: float
    tolerance: float
    duality_equal: bool
    l1_difference: float


def uniqueness_check(
    u1: Field,
    u2: Field,
    mu: AtomicMeasure,
    battery: Sequence[Tuple[str, GridFunction]],
    rtol: float = 1e-2,
    ball: Optional[Ball] = None,
) -> UniquenessReport:
    """
    max_g |int (u1 - u2) g| over the battery, compared with rtol times the
    largest int (|u1| + |u2|) |g| / 2. mu only fixes the dimension.
    """
    worst = 0.0
    scale = 0.0
    for _, g in battery:
        flat = g.values.reshape(-1)
        support = np.flatnonzero(flat)
        if support.size == 0:
            continue
        pts = g.points()[support]
        v1 = np.asarray(u1(pts), dtype=float)
        v2 = np.asarray(u2(pts), dtype=float)
        weights = flat[support] * g.cell_volume
        worst = max(worst, abs(float(np.sum((v1 - v2) * weights))))
        scale = max(scale, 0.5 * float(np.sum((np.abs(v1) + np.abs(v2)) * np.abs(weights))))
    tolerance = rtol * scale
    ball = ball or Ball.centered(mu.dim, 1.0)
    l1 = lebesgue_norm(_difference(u1, u2), 1.0, ball, excision=0.0)
    return UniquenessReport(worst, tolerance, worst <= tolerance, l1)


@dataclass(frozen=True)
class NestedConsistencyReport:
    half_widths: List[float]
    pairings: np.ndarray
    max_spread: float
    ok: bool


def nested_consistency(
    mu: AtomicMeasure,
    params: FracParams,
    half_widths: Sequence[float],
    spacing: float,
    bandwidth: float,
    battery: Optional[TestBattery] = None,
    rtol: float = 1e-8,
) -> NestedConsistencyReport:
    """
    Solve on nested boxes sharing one cell lattice and pair each solution
    with the same battery; the pairings must agree across boxes.
    """
    widths = sorted(float(w) for w in half_widths)
    if len(widths) < 2:
        raise ParameterError("nested consistency needs at least two boxes")
    battery = battery or TestBattery(params.dim, radius=0.8 * widths[0])
    spec = MollifierSpec(bandwidth)
    rows = []
    for width in widths:
        cells = 2.0 * width / spacing
        if abs(cells - round(cells)) > 1e-9 or int(round(cells)) % 2:
            raise GridError(f"half width {width} is not an even number of cells of {spacing}")
        box = Box.cube(params.dim, width)
        u = potential_on_grid(mollify(mu, spec, box, int(round(cells))), params)
        rows.append([float(np.sum(u.values * g.values) * u.cell_volume) for _, g in battery.on_grid(box, u.resolution)])
    pairings = np.asarray(rows)
    spread = float(np.max(np.ptp(pairings, axis=0))) if pairings.size else 0.0
    scale = max(float(np.max(np.abs(pairings))), np.finfo(float).tiny) if pairings.size else 1.0
    return NestedConsistencyReport(widths, pairings, spread, spread <= rtol * scale)


# ============================================================
# Young's inequality
# ============================================================


class YoungReport(NamedTuple):
    lhs: float
    rhs: float
    ratio: float
    r: float


def _on_spacing(f: GridFunction, spacing: float) -> GridFunction:
    """f interpolated onto a lattice of the given spacing covering its box"""
    if abs(f.spacing - spacing) <= 1e-12 * spacing:
        return f
    cells = int(math.ceil(2.0 * f.box.half_width / spacing - 1e-9))
    return GridFunction.from_function(Box(f.box.center, 0.5 * cells * spacing), cells, f)


def convolve(f: GridFunction, g: GridFunction) -> GridFunction:
    """Discrete f * g on the finer of the two lattices; the coarser field is interpolated onto it"""
    h = min(f.spacing, g.spacing)
    f, g = _on_spacing(f, h), _on_spacing(g, h)
    values = fftconvolve(f.values, g.values, mode="full") * f.cell_volume
    n = values.shape[0]
    box = Box(f.box.center + g.box.center, 0.5 * n * h)
    return GridFunction(box, n, values)


def young_check(f: GridFunction, g: GridFunction, p: float, q: float) -> YoungReport:
    """||f*g||_r against ||f||_p ||g||_q with 1/p + 1/q = 1 + 1/r"""
    if p < 1 or q < 1:
        raise ExponentError(f"Young exponents must be >= 1, got p={p}, q={q}")
    excess = 1.0 / p + 1.0 / q - 1.0
    if excess < -1e-12:
        raise ExponentError(f"1/p + 1/q must be >= 1, got {1.0 / p + 1.0 / q:.6g}")
    r = math.inf if excess <= 1e-12 else 1.0 / excess
    lhs = convolve(f, g).lp_norm(r)
    rhs = f.lp_norm(p) * g.lp_norm(q)
    ratio = lhs / rhs if rhs > 0 else 0.0
    return YoungReport(lhs, rhs, ratio, r)
