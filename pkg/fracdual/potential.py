"""
Riesz potentials w = (-Delta)^{-s} f of atomic measures and grid densities,
plus the L^infinity / continuity / decay checks on them.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from types import MappingProxyType
from typing import Dict, List, Mapping, NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.signal import fftconvolve
from scipy.stats import norm, qmc

from .core import AtomicMeasure, Ball, FracParams, GridFunction, as_points, sphere_area, unit_ball_volume
from .exceptions import ExponentError, ParameterError, SingularPointError

logger = logging.getLogger(__name__)

Source = Union[AtomicMeasure, GridFunction]

ATOM_TOLERANCE = 1e-12
# bound on the number of (point, cell) pairs held in memory at once
PAIR_CHUNK = 4_000_000


def _chunks(total: int, size: int):
    for start in range(0, total, max(size, 1)):
        yield slice(start, min(start + size, total))


# ============================================================
# Atomic sources
# ============================================================


def potential_of_measure(mu: AtomicMeasure, x: np.ndarray, params: FracParams):
    """C_{N,s} sum_i w_i |x - y_i|^{-(N-2s)}, exactly"""
    single = np.ndim(x) == 1
    pts = as_points(x, params.dim)
    if len(mu) == 0:
        values = np.zeros(pts.shape[0])
    else:
        dist = np.linalg.norm(pts[:, None, :] - mu.points[None, :, :], axis=2)
        if np.any(dist < ATOM_TOLERANCE):
            raise SingularPointError("potential requested at an atom of the measure")
        values = params.potential_constant * (dist ** (-params.kernel_exponent)) @ mu.weights
    return float(values[0]) if single else values


@dataclass(frozen=True)
class FundamentalSolution:
    """weight * C_{N,s} |x - center|^{-(N-2s)}, the potential of a single atom"""

    params: FracParams
    center: Optional[Tuple[float, ...]] = None
    weight: float = 1.0

    @property
    def location(self) -> np.ndarray:
        return np.zeros(self.params.dim) if self.center is None else np.asarray(self.center, dtype=float)

    def __call__(self, points: np.ndarray) -> np.ndarray:
        pts = as_points(points, self.params.dim)
        r = np.linalg.norm(pts - self.location, axis=1)
        if np.any(r == 0):
            raise SingularPointError("fundamental solution evaluated at its pole")
        return self.weight * self.params.potential_constant * r ** (-self.params.kernel_exponent)


# ============================================================
# Density sources
# ============================================================


def singular_cell_integral(spacing: float, params: FracParams) -> float:
    """
    C_{N,s} * int_{B_rho} |z|^{-(N-2s)} dz for the ball with the volume of one
    cell, i.e. C N vol(B_1) rho^{2s} / (2s).
    """
    n, s = params.dim, params.order
    rho = (spacing**n / unit_ball_volume(n)) ** (1.0 / n)
    return params.potential_constant * sphere_area(n) * rho ** (2 * s) / (2 * s)


def potential_of_density(f: GridFunction, x: np.ndarray, params: FracParams):
    """
    Midpoint quadrature of C_{N,s} int f(y) |x-y|^{-(N-2s)} dy.

    The cell containing x is replaced by the exact integral of the kernel
    over an equal-volume ball centred at x, against that cell's value.
    """
    single = np.ndim(x) == 1
    pts = as_points(x, params.dim)
    flat = f.values.reshape(-1)
    support = np.flatnonzero(flat)
    result = np.zeros(pts.shape[0])
    if support.size == 0:
        return 0.0 if single else result

    centers = f.points()[support]
    weights = flat[support]
    a = params.kernel_exponent

    idx, inside = f.cell_index(pts)
    own = np.full(pts.shape[0], -1, dtype=np.int64)
    if np.any(inside):
        own[inside] = np.ravel_multi_index(tuple(idx[inside].T), f.values.shape)
    # position of each point's own cell inside the support list, or -1
    pos = np.searchsorted(support, own)
    pos = np.where((own >= 0) & (pos < support.size), pos, 0)
    hit = (own >= 0) & (support[pos] == own)
    own_pos = np.where(hit, pos, -1)

    rows = max(PAIR_CHUNK // support.size, 1)
    for block in _chunks(pts.shape[0], rows):
        dist = np.linalg.norm(pts[block, None, :] - centers[None, :, :], axis=2)
        kernel = np.zeros_like(dist)
        np.power(dist, -a, out=kernel, where=dist > 0)
        local = own_pos[block]
        marked = np.flatnonzero(local >= 0)
        kernel[marked, local[marked]] = 0.0
        result[block] = kernel @ weights
    result *= params.potential_constant * f.cell_volume
    singular = singular_cell_integral(f.spacing, params)
    result[hit] += singular * weights[own_pos[hit]]
    return float(result[0]) if single else result


def potential_on_grid(f: GridFunction, params: FracParams) -> GridFunction:
    """potential_of_density at every cell centre, by FFT convolution"""
    n, h = f.resolution, f.spacing
    offsets = np.arange(-(n - 1), n) * h
    mesh = np.meshgrid(*([offsets] * f.dim), indexing="ij")
    radius = np.sqrt(sum(m**2 for m in mesh))
    kernel = np.zeros_like(radius)
    np.power(radius, -params.kernel_exponent, out=kernel, where=radius > 0)
    kernel *= params.potential_constant * f.cell_volume
    kernel[(n - 1,) * f.dim] = singular_cell_integral(h, params)
    if not np.any(f.values):
        return f.with_values(np.zeros_like(f.values))
    values = fftconvolve(f.values, kernel, mode="same")
    return f.with_values(values)


class PotentialField:
    """
    Lazily evaluated Riesz potential of an atomic or density source.

    Point values are memoised; dict.setdefault gives insert-if-absent
    semantics so concurrent readers always see the first stored value.
    """

    def __init__(self, source: Source, params: FracParams, use_cache: bool = True):
        if source.dim != params.dim:
            raise ParameterError(f"source dimension {source.dim} != params dimension {params.dim}")
        self.source = source
        self.params = params
        self.use_cache = use_cache
        self._cache: Dict[Tuple[float, ...], float] = {}

    def __call__(self, points: np.ndarray) -> np.ndarray:
        pts = as_points(points, self.params.dim)
        if isinstance(self.source, AtomicMeasure):
            return potential_of_measure(self.source, pts, self.params)
        return potential_of_density(self.source, pts, self.params)

    def value_at(self, point: Sequence[float]) -> float:
        key = tuple(float(c) for c in np.asarray(point, dtype=float).reshape(-1))
        if self.use_cache and key in self._cache:
            return self._cache[key]
        value = float(self(np.array(key))[0])
        if self.use_cache:
            value = self._cache.setdefault(key, value)
        return value

    @property
    def cache(self) -> Mapping[Tuple[float, ...], float]:
        return MappingProxyType(self._cache)


# ============================================================
# Lemma-type checks
# ============================================================


class LinftyBoundReport(NamedTuple):
    lhs: float
    rhs: float
    ok: bool


def support_ball(f: GridFunction) -> Ball:
    """Smallest ball about the box centre containing every non-zero cell"""
    flat = f.values.reshape(-1)
    nonzero = np.flatnonzero(flat)
    if nonzero.size == 0:
        return Ball(f.box.center, f.spacing)
    radii = np.linalg.norm(f.points()[nonzero] - f.box.center, axis=1)
    return Ball(f.box.center, float(radii.max()) + 0.5 * math.sqrt(f.dim) * f.spacing)


def check_linfty_bound(
    f: GridFunction,
    sigma: float,
    params: FracParams,
    sample_points: np.ndarray,
    ball: Optional[Ball] = None,
    tol: float = 1e-2,
) -> LinftyBoundReport:
    """
    Hoelder bound |w(x)| <= ||f||_sigma (int_{B_R} |x-y|^{-(N-2s) sigma'} dy)^{1/sigma'}.

    The right-hand side is taken at its supremum over x (the centre of B_R).
    """
    n = params.dim
    if sigma <= n / (2 * params.order):
        raise ExponentError(
            f"the L^infinity bound needs sigma > N/(2s) = {n / (2 * params.order):.6g}, got {sigma}"
        )
    pts = as_points(sample_points, n)
    if not np.any(f.values):
        return LinftyBoundReport(0.0, 0.0, True)

    radius = (ball or support_ball(f)).radius
    sigma_dual = sigma / (sigma - 1.0)
    b = params.kernel_exponent * sigma_dual
    kernel_norm = (sphere_area(n) * radius ** (n - b) / (n - b)) ** (1.0 / sigma_dual)
    lhs = float(np.max(np.abs(potential_of_density(f, pts, params))))
    rhs = f.lp_norm(sigma) * kernel_norm
    ok = lhs <= rhs * (1 + tol)
    logger.debug("L^inf bound: lhs=%.6g rhs=%.6g ok=%s", lhs, rhs, ok)
    return LinftyBoundReport(lhs, rhs, ok)


def sphere_directions(dim: int, count: int = 256, seed: int = 0) -> np.ndarray:
    """Deterministic low-discrepancy unit vectors (scrambled Halton + Gaussian map)"""
    sampler = qmc.Halton(d=dim, scramble=True, seed=seed)
    uniform = np.clip(sampler.random(count), 1e-12, 1 - 1e-12)
    gaussian = norm.ppf(uniform)
    return gaussian / np.linalg.norm(gaussian, axis=1, keepdims=True)


@dataclass(frozen=True)
class DecayProfile:
    radii: List[float]
    sups: List[float]
    monotone: bool
    within_envelope: bool

    @property
    def ok(self) -> bool:
        return self.monotone and self.within_envelope

    def halving_ratios(self) -> List[float]:
        """sup(r_i) / sup(r_{i+1}) for consecutive radii"""
        return [
            a / b if b > 0 else math.inf for a, b in zip(self.sups[:-1], self.sups[1:])
        ]


def _source_radius(source: Source) -> float:
    if isinstance(source, AtomicMeasure):
        if len(source) == 0:
            return 0.0
        return float(np.max(np.linalg.norm(source.points, axis=1)))
    return support_ball(source).radius + float(np.linalg.norm(source.box.center))


def check_decay(
    source: Source,
    params: FracParams,
    radii: Sequence[float],
    samples: int = 256,
    seed: int = 0,
    tol: float = 1e-2,
) -> DecayProfile:
    """
    sup |w| over spheres of increasing radius about the origin.

    Flags monotone decrease beyond twice the support radius and the envelope
    sup |w|(r) <= C r^{-(N-2s)} with C fitted at the first radius.
    """
    radii = [float(r) for r in radii]
    if any(b <= a for a, b in zip(radii[:-1], radii[1:])):
        raise ParameterError("decay radii must be strictly increasing")
    reach = _source_radius(source)
    if radii and radii[0] <= reach:
        raise ParameterError(f"decay radii must exceed the support radius {reach:.4g}")

    field = PotentialField(source, params, use_cache=False)
    directions = sphere_directions(params.dim, samples, seed)
    sups = [float(np.max(np.abs(field(r * directions)))) for r in radii]

    a = params.kernel_exponent
    far = [(r, v) for r, v in zip(radii, sups) if r >= 2 * reach]
    monotone = all(v2 <= v1 for (_, v1), (_, v2) in zip(far[:-1], far[1:]))
    envelope = sups[0] * radii[0] ** a if sups else 0.0
    within = all(v <= envelope * r ** (-a) * (1 + tol) for r, v in zip(radii, sups))
    if not monotone:
        logger.warning("decay profile is not monotone beyond twice the support radius")
    if not within:
        logger.warning("decay profile leaves the r^-(N-2s) envelope fitted at r=%g", radii[0])
    return DecayProfile(radii, sups, monotone, within)


@dataclass(frozen=True)
class ContinuityProfile:
    offsets: List[float]
    differences: List[float]
    value: float = 0.0

    @property
    def cauchy(self) -> bool:
        """
        Differences go to zero: the finer half of the offsets stays below half
        the largest difference and the last is below a tenth of it. Differences
        at rounding level of |w(x)| count as zero.
        """
        d = self.differences
        if not d:
            return True
        peak = max(d)
        if peak <= 1e-12 * abs(self.value):
            return True
        tail = d[len(d) // 2 :]
        return max(tail) <= 0.5 * peak and d[-1] <= 0.1 * peak


def check_continuity(
    f: GridFunction,
    x: Sequence[float],
    params: FracParams,
    offsets: Optional[Sequence[float]] = None,
    direction: Optional[Sequence[float]] = None,
) -> ContinuityProfile:
    """|w(x + t e) - w(x)| along a geometric sequence of offsets t -> 0"""
    base = np.asarray(x, dtype=float).reshape(-1)
    e = np.ones(params.dim) if direction is None else np.asarray(direction, dtype=float)
    e = e / np.linalg.norm(e)
    if offsets is None:
        offsets = [0.25 * f.spacing * 0.5**k for k in range(8)]
    steps = np.asarray(offsets, dtype=float)
    points = np.vstack([base, base + steps[:, None] * e])
    values = potential_of_density(f, points, params)
    differences = np.abs(values[1:] - values[0])
    return ContinuityProfile(steps.tolist(), differences.tolist(), float(values[0]))
