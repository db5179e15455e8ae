"""
Local Lebesgue norms, Gagliardo seminorms and excision studies.

Norms are integrated over B_R minus a ball B_eps about a declared singular
point. The excised region is covered by a uniform grid down to eps_0 and
below it by dyadic shells B_{eps_j} \\ B_{eps_j/2}, each carrying the same
grid scaled to eps_j. For a homogeneous singularity the shell contributions
form an exact geometric sequence, whose ratio decides boundedness.
"""

from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, List, NamedTuple, Optional, Sequence

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.special import comb, gamma

from .core import (
    Ball,
    Box,
    ExponentKind,
    ExponentSpec,
    FracParams,
    GridFunction,
    embedding_exponent,
)
from .exceptions import ExponentError, NonFiniteValueError, ParameterError, ScheduleError

logger = logging.getLogger(__name__)

Field = Callable[[np.ndarray], np.ndarray]

PAIR_CHUNK = 4_000_000
DIVERGENCE_RATE = 1e-3
DEFAULT_LEVELS = 8
SCHEDULE_RATIO = 0.5
# (outer cells per axis, shell cells per axis) by dimension
DEFAULT_RESOLUTION = {2: (64, 32), 3: (24, 12)}
FALLBACK_RESOLUTION = (12, 8)


# ============================================================
# Quadrature on excised balls
# ============================================================


@dataclass(frozen=True, eq=False)
class ExcisedQuadrature:
    """
    Nodes of B_R \\ B_eps grouped as outer region (group 0) and dyadic
    shells (group j+1 covers eps_0 2^-(j+1) <= |x-p| < eps_0 2^-j).
    """

    nodes: np.ndarray
    weights: np.ndarray
    spacing: np.ndarray
    group: np.ndarray
    outer_excision: float

    @property
    def dim(self) -> int:
        return int(self.nodes.shape[1])

    @property
    def group_count(self) -> int:
        return int(self.group.max()) + 1 if self.group.size else 1

    def groups_for(self, excision: float) -> int:
        """Number of leading groups that make up B_R \\ B_excision"""
        if excision <= 0 or self.outer_excision <= 0:
            return self.group_count
        shells = math.log2(self.outer_excision / excision)
        if shells < -1e-9 or abs(shells - round(shells)) > 1e-6:
            raise ScheduleError(
                f"excision {excision:g} is not a dyadic refinement of {self.outer_excision:g}"
            )
        return 1 + int(round(shells))

    def onehot(self) -> np.ndarray:
        table = np.zeros((self.nodes.shape[0], self.group_count))
        table[np.arange(self.nodes.shape[0]), self.group] = 1.0
        return table


def _resolutions(dim: int, resolution: Optional[int], shell_resolution: Optional[int]):
    outer, shell = DEFAULT_RESOLUTION.get(dim, FALLBACK_RESOLUTION)
    return int(resolution or outer), int(shell_resolution or shell)


def _unit_shell(dim: int, cells: int) -> np.ndarray:
    axis = -1.0 + (np.arange(cells) + 0.5) * (2.0 / cells)
    mesh = np.meshgrid(*([axis] * dim), indexing="ij")
    unit = np.stack([m.reshape(-1) for m in mesh], axis=1)
    radius = np.linalg.norm(unit, axis=1)
    return unit[(radius >= 0.5) & (radius < 1.0)]


def excised_quadrature(
    ball: Ball,
    excision: float = 0.0,
    singular_point: Optional[Sequence[float]] = None,
    resolution: Optional[int] = None,
    shell_resolution: Optional[int] = None,
) -> ExcisedQuadrature:
    if not (0.0 <= excision < ball.radius):
        raise ParameterError(f"excision must lie in [0, {ball.radius}), got {excision}")
    dim = ball.dim
    point = ball.center if singular_point is None else np.asarray(singular_point, dtype=float)
    n_outer, n_shell = _resolutions(dim, resolution, shell_resolution)

    outer = GridFunction.zeros(Box(ball.center, ball.radius), n_outer)
    nodes = outer.points()
    keep = ball.contains(nodes)
    shells = 0
    outer_excision = 0.0
    if excision > 0:
        shells = max(0, int(math.floor(math.log2(ball.radius / (2.0 * excision)) + 1e-9)))
        outer_excision = excision * 2.0**shells
        keep &= np.linalg.norm(nodes - point, axis=1) >= outer_excision

    parts = [nodes[keep]]
    spacing = [np.full(parts[0].shape[0], outer.spacing)]
    groups = [np.zeros(parts[0].shape[0], dtype=np.int64)]
    unit = _unit_shell(dim, n_shell)
    for j in range(shells):
        radius = outer_excision * 2.0**-j
        shell_nodes = point + radius * unit
        shell_nodes = shell_nodes[ball.contains(shell_nodes)]
        parts.append(shell_nodes)
        spacing.append(np.full(shell_nodes.shape[0], 2.0 * radius / n_shell))
        groups.append(np.full(shell_nodes.shape[0], j + 1, dtype=np.int64))

    h = np.concatenate(spacing)
    logger.debug("excised quadrature: %d outer nodes, %d shells", parts[0].shape[0], shells)
    return ExcisedQuadrature(
        nodes=np.vstack(parts),
        weights=h**dim,
        spacing=h,
        group=np.concatenate(groups),
        outer_excision=outer_excision,
    )


def _evaluate(u: Field, nodes: np.ndarray) -> np.ndarray:
    values = np.asarray(u(nodes), dtype=float).reshape(-1)
    if not np.all(np.isfinite(values)):
        raise NonFiniteValueError("field is not finite on the quadrature nodes")
    return values


# ============================================================
# Pair sums
# ============================================================


def gagliardo_pair_sum(
    values: np.ndarray, nodes: np.ndarray, weights: np.ndarray, eta: float, p: float
) -> float:
    """sum over a != b of |u_a - u_b|^p |x_a - x_b|^{-N-eta p} w_a w_b, row-chunked"""
    group = np.zeros(nodes.shape[0], dtype=np.int64)
    return float(_pair_group_sums(values, nodes, weights, np.ones((nodes.shape[0], 1)), group, eta, p)[0, 0])


def _pair_group_sums(values, nodes, weights, onehot, group, eta, p) -> np.ndarray:
    total, dim = nodes.shape
    groups = onehot.shape[1]
    out = np.zeros((groups, groups))
    power = dim + eta * p
    rows = max(PAIR_CHUNK // max(total, 1), 1)
    for start in range(0, total, rows):
        block = slice(start, min(start + rows, total))
        dist = np.linalg.norm(nodes[block, None, :] - nodes[None, :, :], axis=2)
        term = np.zeros_like(dist)
        np.power(dist, -power, out=term, where=dist > 0)
        term *= np.abs(values[block, None] - values[None, :]) ** p
        term *= weights[block, None] * weights[None, :]
        np.add.at(out, group[block], term @ onehot)
    return out


@lru_cache(maxsize=32)
def cell_pair_integral(dim: int, beta: float, order: int = 12) -> float:
    """
    int int over the unit cube squared of |x - y|^beta, beta > -N.

    Uses int_{[-1,1]^N} |z|^beta prod(1 - |z_i|) dz and the scaling
    identity for the homogeneous moments on [0,1]^N.
    """
    if beta <= -dim:
        raise ExponentError(f"cell pair integral diverges for beta={beta} <= -N")
    x, w = leggauss(order)
    halves = [(0.25 * (x + 1.0), 0.25 * w), (0.5 + 0.25 * (x + 1.0), 0.25 * w)]
    moments = np.zeros(dim + 1)
    for corner in itertools.product((0, 1), repeat=dim):
        if not any(corner):
            continue
        axes = [halves[c][0] for c in corner]
        wts = [halves[c][1] for c in corner]
        z = np.stack([m.reshape(-1) for m in np.meshgrid(*axes, indexing="ij")], axis=1)
        weight = np.prod(np.stack([m.reshape(-1) for m in np.meshgrid(*wts, indexing="ij")], axis=1), axis=1)
        base = weight * np.linalg.norm(z, axis=1) ** beta
        for k in range(dim + 1):
            moments[k] += np.sum(base * np.prod(z[:, :k], axis=1))
    total = 0.0
    for k in range(dim + 1):
        moment = moments[k] / (1.0 - 2.0 ** (-(dim + beta + k)))
        total += comb(dim, k) * (-1) ** k * moment
    return float(2**dim * total)


def _directional_mean(dim: int, p: float) -> float:
    """Mean of |omega_1|^p over the unit sphere"""
    return gamma(dim / 2) * gamma((p + 1) / 2) / (math.sqrt(math.pi) * gamma((dim + p) / 2))


def _gradient_norms(u: Field, nodes: np.ndarray, spacing: np.ndarray) -> np.ndarray:
    dim = nodes.shape[1]
    step = 0.5 * spacing
    squares = np.zeros(nodes.shape[0])
    for axis in range(dim):
        offset = np.zeros((nodes.shape[0], dim))
        offset[:, axis] = step
        diff = _evaluate(u, nodes + offset) - _evaluate(u, nodes - offset)
        squares += (diff / (2 * step)) ** 2
    return np.sqrt(squares)


def _same_cell_terms(u: Field, quad: ExcisedQuadrature, eta: float, p: float) -> np.ndarray:
    """|grad u|^p <|e.(x-y)|^p>  int int_{cell^2} |x-y|^{p-N-eta p}, per node"""
    dim = quad.dim
    unit = cell_pair_integral(dim, p * (1 - eta) - dim) * _directional_mean(dim, p)
    grad = _gradient_norms(u, quad.nodes, quad.spacing)
    return grad**p * unit * quad.spacing ** (dim + p * (1 - eta))


def _check_sobolev(eta: float, p: float) -> None:
    if not (0.0 < eta < 1.0):
        raise ExponentError(f"Sobolev order eta must lie in (0, 1), got {eta}")
    if p < 1:
        raise ExponentError(f"Sobolev exponent p must be >= 1, got {p}")


def _seminorm_groups(u: Field, quad: ExcisedQuadrature, values: np.ndarray, eta: float, p: float) -> np.ndarray:
    """Group-by-group contributions to the p-th power of the seminorm"""
    groups = _pair_group_sums(values, quad.nodes, quad.weights, quad.onehot(), quad.group, eta, p)
    if np.ptp(values) > 0:
        same = np.bincount(quad.group, weights=_same_cell_terms(u, quad, eta, p), minlength=quad.group_count)
        groups[np.diag_indices_from(groups)] += same
    return groups


# ============================================================
# Public norms
# ============================================================


def lebesgue_norm(
    u: Field,
    r: float,
    ball: Ball,
    excision: float = 0.0,
    singular_point: Optional[Sequence[float]] = None,
    resolution: Optional[int] = None,
    shell_resolution: Optional[int] = None,
) -> float:
    """(int_{B_R \\ B_excision(p)} |u|^r dx)^{1/r}"""
    if r < 1:
        raise ExponentError(f"Lebesgue exponent r must be >= 1, got {r}")
    quad = excised_quadrature(ball, excision, singular_point, resolution, shell_resolution)
    values = _evaluate(u, quad.nodes)
    return float(np.sum(np.abs(values) ** r * quad.weights) ** (1.0 / r))


def gagliardo_seminorm(
    u: Field,
    eta: float,
    p: float,
    ball: Ball,
    excision: float = 0.0,
    singular_point: Optional[Sequence[float]] = None,
    resolution: Optional[int] = None,
    shell_resolution: Optional[int] = None,
) -> float:
    """(int int |u(x) - u(y)|^p / |x - y|^{N + eta p} dx dy)^{1/p} over (B_R \\ B_excision)^2"""
    _check_sobolev(eta, p)
    quad = excised_quadrature(ball, excision, singular_point, resolution, shell_resolution)
    values = _evaluate(u, quad.nodes)
    return float(np.sum(_seminorm_groups(u, quad, values, eta, p)) ** (1.0 / p))


def full_sobolev_norm(
    u: Field,
    eta: float,
    p: float,
    ball: Ball,
    resolution: Optional[int] = None,
    excision: float = 0.0,
    singular_point: Optional[Sequence[float]] = None,
) -> float:
    """
    ||u||_{L^p} + [u]_{eta,p} over B_R. A positive excision around singular_point
    refines the quadrature on dyadic shells down to that radius and leaves out
    the innermost ball.
    """
    return lebesgue_norm(u, p, ball, excision, singular_point, resolution) + gagliardo_seminorm(
        u, eta, p, ball, excision, singular_point, resolution
    )


class EmbeddingReport(NamedTuple):
    gamma_bar: float
    lhs: float
    rhs: float
    ratio: float


def embedding_check(
    v: Field, eta: float, p: float, ball: Ball, resolution: Optional[int] = None
) -> EmbeddingReport:
    """||v||_{L^gamma_bar(B_R)} against ||v||_{W^{eta,p}(B_R)}, gamma_bar = Np/(N - eta p)"""
    _check_sobolev(eta, p)
    gamma_bar = embedding_exponent(ball.dim, eta, p)
    lhs = lebesgue_norm(v, gamma_bar, ball, resolution=resolution)
    rhs = full_sobolev_norm(v, eta, p, ball, resolution=resolution)
    ratio = lhs / rhs if rhs > 0 else 0.0
    return EmbeddingReport(gamma_bar, lhs, rhs, ratio)


# ============================================================
# Excision studies
# ============================================================


@dataclass
class NormReport:
    spec: ExponentSpec
    ball: Ball
    excision_radii: List[float]
    values: List[float]
    divergence_flag: bool
    fitted_rate: float
    loglog_slope: float
    expected_divergent: Optional[bool] = None
    increments: List[float] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        """The flag matches the classification from the critical exponents"""
        return self.expected_divergent is None or self.expected_divergent == self.divergence_flag

    def to_dict(self) -> dict:
        return {
            "spec": self.spec.label,
            "kind": self.spec.kind.value,
            "excision_radii": list(self.excision_radii),
            "values": list(self.values),
            "divergence_flag": self.divergence_flag,
            "fitted_rate": self.fitted_rate,
            "loglog_slope": self.loglog_slope,
            "expected_divergent": self.expected_divergent,
            "passed": self.passed,
        }


def default_excision_schedule(ball: Ball, levels: int = DEFAULT_LEVELS) -> List[float]:
    return [ball.radius / 4 * SCHEDULE_RATIO**j for j in range(levels)]


def check_schedule(schedule: Sequence[float], ball: Ball) -> List[float]:
    radii = [float(e) for e in schedule]
    if len(radii) < 3:
        raise ScheduleError("an excision schedule needs at least 3 levels")
    if any(e <= 0 for e in radii):
        raise ScheduleError("excision radii must be positive")
    if radii[0] > ball.radius / 2:
        raise ScheduleError(f"largest excision {radii[0]:g} exceeds half the ball radius")
    for a, b in zip(radii[:-1], radii[1:]):
        if abs(b / a - SCHEDULE_RATIO) > 1e-9:
            raise ScheduleError(f"excision schedule must be geometric with ratio {SCHEDULE_RATIO}")
    return radii


def fitted_rate(increments: Sequence[float], ratio: float = SCHEDULE_RATIO) -> float:
    """kappa in Delta_j ~ eps_j^kappa from the last two increments"""
    previous, last = increments[-2], increments[-1]
    scale = max(abs(previous), abs(last))
    if last <= 1e-14 * max(scale, np.finfo(float).tiny) or scale == 0:
        return math.inf
    return math.log(max(previous, np.finfo(float).tiny) / last) / math.log(1.0 / ratio)


def _loglog_slope(radii: Sequence[float], values: Sequence[float]) -> float:
    vals = np.asarray(values, dtype=float)
    if np.any(vals <= 0):
        return 0.0
    return float(np.polyfit(np.log(radii), np.log(vals), 1)[0])


def regularity_sweep(
    u: Field,
    specs: Sequence[ExponentSpec],
    ball: Ball,
    schedule: Optional[Sequence[float]] = None,
    params: Optional[FracParams] = None,
    singular_point: Optional[Sequence[float]] = None,
    resolution: Optional[int] = None,
    shell_resolution: Optional[int] = None,
) -> List[NormReport]:
    """
    One excision study per exponent spec.

    Lebesgue specs track int |u|^r; Sobolev specs track the p-th power of
    the full W^{eta,p} norm. A spec is flagged divergent when the shell
    increments stop shrinking (fitted rate <= 1e-3).
    """
    radii = check_schedule(default_excision_schedule(ball) if schedule is None else schedule, ball)
    quad = excised_quadrature(ball, radii[-1], singular_point, resolution, shell_resolution)
    values = _evaluate(u, quad.nodes)
    counts = [quad.groups_for(e) for e in radii]
    reports = []
    for spec in specs:
        power = spec.exponent
        lebesgue = np.bincount(quad.group, weights=np.abs(values) ** power * quad.weights, minlength=quad.group_count)
        if spec.kind is ExponentKind.LEBESGUE:
            integrals = [float(np.sum(lebesgue[:g])) for g in counts]
        else:
            pairs = _seminorm_groups(u, quad, values, spec.eta, spec.p)
            integrals = [float(np.sum(lebesgue[:g]) + np.sum(pairs[:g, :g])) for g in counts]
        norms = [value ** (1.0 / power) for value in integrals]
        increments = list(np.diff(integrals))
        rate = fitted_rate(increments)
        divergent = rate <= DIVERGENCE_RATE
        expected = spec.is_supercritical(params) if params is not None else None
        logger.debug("sweep %s: rate=%.4g divergent=%s", spec.label, rate, divergent)
        reports.append(
            NormReport(
                spec=spec,
                ball=ball,
                excision_radii=radii,
                values=norms,
                divergence_flag=divergent,
                fitted_rate=rate,
                loglog_slope=_loglog_slope(radii, norms),
                expected_divergent=expected,
                increments=increments,
            )
        )
    return reports
