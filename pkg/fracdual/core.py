"""
Core domain types shared by every fracdual module.

FracParams carries the dimension, the order and the normalisation pair of the
Riesz kernel / fractional Laplacian. AtomicMeasure, GridFunction and Ball are
the carriers for measures, sampled fields and localisation domains. All types
are immutable after construction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Callable, List, NamedTuple, Optional, Protocol, Sequence, Tuple

import numpy as np
from scipy.interpolate import RegularGridInterpolator
from scipy.special import gamma

from .exceptions import ExponentError, GridError, ParameterError


class ScalarField(Protocol):
    """Anything that maps an (M, N) array of points to M values"""

    def __call__(self, points: np.ndarray) -> np.ndarray: ...


def unit_ball_volume(dim: int) -> float:
    return math.pi ** (dim / 2) / math.gamma(dim / 2 + 1)


def sphere_area(dim: int) -> float:
    """Surface measure of the unit sphere S^{N-1}"""
    return dim * unit_ball_volume(dim)


def as_points(points: np.ndarray, dim: int) -> np.ndarray:
    """Coerce a single point or a stack of points to shape (M, dim)"""
    pts = np.asarray(points, dtype=float)
    if pts.ndim == 1:
        pts = pts.reshape(1, -1)
    if pts.ndim != 2 or pts.shape[1] != dim:
        raise GridError(f"expected points of dimension {dim}, got shape {np.shape(points)}")
    return pts


# ============================================================
# Parameters
# ============================================================


def standard_constants(dim: int, order: float) -> Tuple[float, float]:
    """
    Normalisation pair (C_{N,s}, c_{N,s}) for which the Riesz potential inverts
    the fractional Laplacian with Fourier symbol |xi|^{2s}.
    """
    s = order
    potential_constant = gamma((dim - 2 * s) / 2) / (4**s * math.pi ** (dim / 2) * gamma(s))
    operator_constant = 4**s * gamma(dim / 2 + s) / (math.pi ** (dim / 2) * abs(gamma(-s)))
    return float(potential_constant), float(operator_constant)


def _check_dim_order(dim: int, order: float) -> None:
    if isinstance(dim, bool) or not isinstance(dim, (int, np.integer)) or dim < 2:
        raise ParameterError(f"dimension N must be an integer >= 2, got {dim!r}")
    if not (0.5 < float(order) < 1.0):
        raise ParameterError(f"order s must lie in (1/2, 1), got {order!r}")


@dataclass(frozen=True)
class FracParams:
    """Dimension N, order s and the kernel normalisation constants"""

    dim: int
    order: float
    potential_constant: float
    operator_constant: float

    def __post_init__(self):
        _check_dim_order(self.dim, self.order)
        for name in ("potential_constant", "operator_constant"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise ParameterError(f"{name} must be finite and > 0, got {value!r}")

    @classmethod
    def standard(cls, dim: int, order: float) -> "FracParams":
        _check_dim_order(dim, order)
        potential_constant, operator_constant = standard_constants(int(dim), float(order))
        return cls(int(dim), float(order), potential_constant, operator_constant)

    @property
    def kernel_exponent(self) -> float:
        """N - 2s, the decay exponent of the Riesz kernel"""
        return self.dim - 2 * self.order


class CriticalExponents(NamedTuple):
    r_star: float
    q_star: float
    eta_of: Callable[[float], float]


def critical_exponents(params: FracParams) -> CriticalExponents:
    """
    Sharp integrability exponents of the duality solution.

    r_star = N/(N-2s) bounds the Lebesgue exponents, q_star = (N+2-2s)/(N+1-2s)
    bounds the fractional Sobolev exponents, and eta_of(q) = 1 - (2-2s)/q is the
    differentiability order paired with q.
    """
    n, s = params.dim, params.order
    r_star = n / (n - 2 * s)
    q_star = (n + 2 - 2 * s) / (n + 1 - 2 * s)

    def eta_of(q: float) -> float:
        return 1.0 - (2.0 - 2.0 * s) / q

    return CriticalExponents(r_star, q_star, eta_of)


def sobolev_exponent_from_holder(params: FracParams, sigma: float) -> float:
    """q = sigma'(N+2-2s)/(N+sigma'), the exponent reached from a test class L^sigma"""
    n, s = params.dim, params.order
    if sigma <= n / (2 * s):
        raise ExponentError(f"sigma must exceed N/(2s) = {n / (2 * s):.6g}, got {sigma}")
    sigma_dual = sigma / (sigma - 1.0)
    return sigma_dual * (n + 2 - 2 * s) / (n + sigma_dual)


def compact_embedding_limit(params: FracParams) -> float:
    """Upper bound 1 + 2/(N-2s) for strong local convergence exponents"""
    return 1.0 + 2.0 / params.kernel_exponent


def minimal_order(dim: int) -> float:
    """(2+N-sqrt(4+N^2))/4: below this order eta_of(q) can fail to be positive"""
    return (2 + dim - math.sqrt(4 + dim * dim)) / 4


def embedding_exponent(dim: int, eta: float, p: float) -> float:
    """gamma_bar = Np/(N - eta p) of the fractional Sobolev embedding"""
    if eta * p >= dim:
        raise ExponentError(f"embedding needs eta*p < N, got eta*p = {eta * p:.6g} >= {dim}")
    return dim * p / (dim - eta * p)


# ============================================================
# Measures
# ============================================================


@dataclass(frozen=True, eq=False)
class AtomicMeasure:
    """Finite signed combination of point masses inside a ball about the origin"""

    points: np.ndarray
    weights: np.ndarray
    support_radius: float

    def __post_init__(self):
        points = np.asarray(self.points, dtype=float)
        weights = np.asarray(self.weights, dtype=float).reshape(-1)
        if points.ndim != 2:
            raise ParameterError(f"atom points must be an (m, N) array, got shape {points.shape}")
        if points.shape[0] != weights.shape[0]:
            raise ParameterError(
                f"{points.shape[0]} atom points but {weights.shape[0]} weights"
            )
        if not (math.isfinite(self.support_radius) and self.support_radius > 0):
            raise ParameterError(f"support_radius must be > 0, got {self.support_radius!r}")
        if not (np.all(np.isfinite(points)) and np.all(np.isfinite(weights))):
            raise ParameterError("atom points and weights must be finite")
        if points.size:
            radii = np.linalg.norm(points, axis=1)
            if np.any(radii > self.support_radius * (1 + 1e-12)):
                raise ParameterError(
                    f"atom at radius {radii.max():.6g} outside support radius {self.support_radius}"
                )
        points.setflags(write=False)
        weights.setflags(write=False)
        object.__setattr__(self, "points", points)
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "support_radius", float(self.support_radius))

    @classmethod
    def from_atoms(
        cls,
        atoms: Sequence[Tuple[Sequence[float], float]],
        support_radius: float,
        dim: Optional[int] = None,
    ) -> "AtomicMeasure":
        if not atoms:
            if dim is None:
                raise ParameterError("dim is required for a measure without atoms")
            return cls.zero(dim, support_radius)
        points = np.array([np.asarray(p, dtype=float) for p, _ in atoms])
        weights = np.array([float(w) for _, w in atoms])
        if dim is not None and points.shape[1] != dim:
            raise ParameterError(f"atoms have dimension {points.shape[1]}, expected {dim}")
        return cls(points, weights, support_radius)

    @classmethod
    def zero(cls, dim: int, support_radius: float = 1.0) -> "AtomicMeasure":
        return cls(np.zeros((0, dim)), np.zeros(0), support_radius)

    @classmethod
    def dirac(
        cls,
        dim: int,
        point: Optional[Sequence[float]] = None,
        weight: float = 1.0,
        support_radius: Optional[float] = None,
    ) -> "AtomicMeasure":
        location = np.zeros(dim) if point is None else np.asarray(point, dtype=float)
        radius = support_radius if support_radius is not None else max(float(np.linalg.norm(location)), 1.0)
        return cls(location.reshape(1, dim), np.array([weight]), radius)

    @property
    def dim(self) -> int:
        return int(self.points.shape[1])

    @property
    def atoms(self) -> List[Tuple[np.ndarray, float]]:
        return [(p.copy(), float(w)) for p, w in zip(self.points, self.weights)]

    @property
    def total_variation(self) -> float:
        """|mu|(R^N), the sum of absolute weights"""
        return float(np.sum(np.abs(self.weights)))

    @property
    def total_mass(self) -> float:
        return float(np.sum(self.weights))

    def is_zero(self) -> bool:
        return not np.any(self.weights)

    def __len__(self) -> int:
        return int(self.weights.shape[0])

    def scaled(self, factor: float) -> "AtomicMeasure":
        return AtomicMeasure(self.points, factor * self.weights, self.support_radius)

    def translated(self, shift: Sequence[float]) -> "AtomicMeasure":
        offset = np.asarray(shift, dtype=float)
        return AtomicMeasure(
            self.points + offset,
            self.weights,
            self.support_radius + float(np.linalg.norm(offset)),
        )

    def __add__(self, other: "AtomicMeasure") -> "AtomicMeasure":
        if other.dim != self.dim:
            raise ParameterError("cannot add measures of different dimensions")
        return AtomicMeasure(
            np.vstack([self.points, other.points]),
            np.concatenate([self.weights, other.weights]),
            max(self.support_radius, other.support_radius),
        )

    def __mul__(self, factor: float) -> "AtomicMeasure":
        return self.scaled(factor)

    __rmul__ = __mul__


# ============================================================
# Geometry
# ============================================================


@dataclass(frozen=True, eq=False)
class Ball:
    center: np.ndarray
    radius: float

    def __post_init__(self):
        center = np.asarray(self.center, dtype=float).reshape(-1)
        if not (math.isfinite(self.radius) and self.radius > 0):
            raise ParameterError(f"ball radius must be > 0, got {self.radius!r}")
        center.setflags(write=False)
        object.__setattr__(self, "center", center)
        object.__setattr__(self, "radius", float(self.radius))

    @classmethod
    def centered(cls, dim: int, radius: float) -> "Ball":
        return cls(np.zeros(dim), radius)

    @property
    def dim(self) -> int:
        return int(self.center.shape[0])

    @property
    def volume(self) -> float:
        return unit_ball_volume(self.dim) * self.radius**self.dim

    def contains(self, points: np.ndarray) -> np.ndarray:
        pts = as_points(points, self.dim)
        return np.linalg.norm(pts - self.center, axis=1) <= self.radius


@dataclass(frozen=True, eq=False)
class Box:
    """Axis-aligned cube center +- half_width"""

    center: np.ndarray
    half_width: float

    def __post_init__(self):
        center = np.asarray(self.center, dtype=float).reshape(-1)
        if not (math.isfinite(self.half_width) and self.half_width > 0):
            raise ParameterError(f"box half_width must be > 0, got {self.half_width!r}")
        center.setflags(write=False)
        object.__setattr__(self, "center", center)
        object.__setattr__(self, "half_width", float(self.half_width))

    @classmethod
    def cube(cls, dim: int, half_width: float, center: Optional[Sequence[float]] = None) -> "Box":
        return cls(np.zeros(dim) if center is None else np.asarray(center, dtype=float), half_width)

    @property
    def dim(self) -> int:
        return int(self.center.shape[0])

    @property
    def lower(self) -> np.ndarray:
        return self.center - self.half_width

    @property
    def upper(self) -> np.ndarray:
        return self.center + self.half_width

    def contains_ball(self, center: Sequence[float], radius: float) -> bool:
        c = np.asarray(center, dtype=float)
        return bool(np.all(c - radius >= self.lower - 1e-12) and np.all(c + radius <= self.upper + 1e-12))

    def contains(self, points: np.ndarray) -> np.ndarray:
        pts = as_points(points, self.dim)
        return np.all((pts >= self.lower) & (pts <= self.upper), axis=1)


# ============================================================
# Sampled fields
# ============================================================


@dataclass(frozen=True, eq=False)
class GridFunction:
    """
    Cell-centred samples of a scalar field on a uniform tensor grid.

    values has shape (resolution,)*dim; cell (i_1, ..., i_N) is centred at
    lower + (i + 1/2) h with h = 2 half_width / resolution.
    """

    box: Box
    resolution: int
    values: np.ndarray

    def __post_init__(self):
        if isinstance(self.resolution, bool) or int(self.resolution) != self.resolution or self.resolution < 1:
            raise GridError(f"resolution must be a positive integer, got {self.resolution!r}")
        n, dim = int(self.resolution), self.box.dim
        values = np.array(self.values, dtype=float)
        if values.size != n**dim:
            raise GridError(f"expected {n}^{dim} = {n**dim} values, got {values.size}")
        if not np.all(np.isfinite(values)):
            raise GridError("grid values must be finite")
        values = values.reshape((n,) * dim)
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "resolution", n)

    # -- construction --------------------------------------------------

    @classmethod
    def from_function(cls, box: Box, resolution: int, func: ScalarField) -> "GridFunction":
        template = cls.zeros(box, resolution)
        sampled = np.asarray(func(template.points()), dtype=float)
        return cls(box, resolution, sampled.reshape((resolution,) * box.dim))

    @classmethod
    def zeros(cls, box: Box, resolution: int) -> "GridFunction":
        return cls(box, resolution, np.zeros((resolution,) * box.dim))

    def with_values(self, values: np.ndarray) -> "GridFunction":
        return GridFunction(self.box, self.resolution, values)

    # -- geometry ------------------------------------------------------

    @property
    def dim(self) -> int:
        return self.box.dim

    @property
    def spacing(self) -> float:
        return 2.0 * self.box.half_width / self.resolution

    @property
    def cell_volume(self) -> float:
        return self.spacing**self.dim

    def axes(self) -> List[np.ndarray]:
        h = self.spacing
        offsets = (np.arange(self.resolution) + 0.5) * h
        return [lo + offsets for lo in self.box.lower]

    def points(self) -> np.ndarray:
        """Cell centres as an (n^N, N) array in C order of the values array"""
        mesh = np.meshgrid(*self.axes(), indexing="ij")
        return np.stack([m.reshape(-1) for m in mesh], axis=1)

    def cell_index(self, points: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """Integer cell indices of points and a mask of points inside the grid"""
        pts = as_points(points, self.dim)
        idx = np.floor((pts - self.box.lower) / self.spacing).astype(np.int64)
        inside = np.all((idx >= 0) & (idx < self.resolution), axis=1)
        return idx, inside

    def index_of(self, point: Sequence[float], rtol: float = 1e-6) -> Tuple[int, ...]:
        """Index of the cell whose centre coincides with point"""
        pt = np.asarray(point, dtype=float).reshape(-1)
        rel = (pt - self.box.lower) / self.spacing - 0.5
        idx = np.rint(rel).astype(np.int64)
        if np.any(np.abs(rel - idx) > rtol) or np.any(idx < 0) or np.any(idx >= self.resolution):
            raise GridError(f"point {pt.tolist()} is not a cell centre of this grid")
        return tuple(int(i) for i in idx)

    def center_of(self, index: Sequence[int]) -> np.ndarray:
        return self.box.lower + (np.asarray(index, dtype=float) + 0.5) * self.spacing

    # -- integrals -----------------------------------------------------

    @property
    def l1_mass(self) -> float:
        return float(np.sum(np.abs(self.values)) * self.cell_volume)

    def integral(self) -> float:
        return float(np.sum(self.values) * self.cell_volume)

    def lp_norm(self, p: float) -> float:
        if math.isinf(p):
            return float(np.max(np.abs(self.values))) if self.values.size else 0.0
        if p < 1:
            raise ExponentError(f"L^p norms need p >= 1, got {p}")
        return float((np.sum(np.abs(self.values) ** p) * self.cell_volume) ** (1.0 / p))

    def pair(self, other: "GridFunction") -> float:
        """Discrete L^2 pairing with a field on the same grid"""
        self._check_same_grid(other)
        return float(np.sum(self.values * other.values) * self.cell_volume)

    # -- evaluation & arithmetic --------------------------------------

    def __call__(self, points: np.ndarray) -> np.ndarray:
        """Multilinear interpolation of the samples; zero outside the box"""
        pts = as_points(points, self.dim)
        interpolator = RegularGridInterpolator(
            self.axes(), self.values, method="linear", bounds_error=False, fill_value=None
        )
        out = interpolator(pts)
        out[~self.box.contains(pts)] = 0.0
        return out

    def _check_same_grid(self, other: "GridFunction") -> None:
        if (
            other.resolution != self.resolution
            or other.box.half_width != self.box.half_width
            or not np.array_equal(other.box.center, self.box.center)
        ):
            raise GridError("grid functions live on different grids")

    def __add__(self, other: "GridFunction") -> "GridFunction":
        self._check_same_grid(other)
        return self.with_values(self.values + other.values)

    def __sub__(self, other: "GridFunction") -> "GridFunction":
        self._check_same_grid(other)
        return self.with_values(self.values - other.values)

    def __mul__(self, factor: float) -> "GridFunction":
        return self.with_values(factor * self.values)

    __rmul__ = __mul__

    def __neg__(self) -> "GridFunction":
        return self.with_values(-self.values)


# ============================================================
# Exponents
# ============================================================


class ExponentKind(str, Enum):
    LEBESGUE = "lebesgue"
    SOBOLEV = "sobolev"


@dataclass(frozen=True)
class ExponentSpec:
    kind: ExponentKind
    r: Optional[float] = None
    eta: Optional[float] = None
    p: Optional[float] = None

    def __post_init__(self):
        if self.kind is ExponentKind.LEBESGUE:
            if self.r is None or not self.r >= 1:
                raise ExponentError(f"Lebesgue exponent r must be >= 1, got {self.r!r}")
        else:
            if self.eta is None or not (0 < self.eta < 1):
                raise ExponentError(f"Sobolev order eta must lie in (0, 1), got {self.eta!r}")
            if self.p is None or not self.p >= 1:
                raise ExponentError(f"Sobolev exponent p must be >= 1, got {self.p!r}")

    @classmethod
    def lebesgue(cls, r: float) -> "ExponentSpec":
        return cls(ExponentKind.LEBESGUE, r=float(r))

    @classmethod
    def sobolev(cls, eta: float, p: float) -> "ExponentSpec":
        return cls(ExponentKind.SOBOLEV, eta=float(eta), p=float(p))

    @classmethod
    def sobolev_from_q(cls, params: FracParams, q: float) -> "ExponentSpec":
        """The pair (eta_of(q), q) on the regularity scale of the solution"""
        return cls.sobolev(critical_exponents(params).eta_of(q), q)

    @property
    def exponent(self) -> float:
        """r for Lebesgue specs, p for Sobolev specs"""
        return float(self.r if self.kind is ExponentKind.LEBESGUE else self.p)

    @property
    def label(self) -> str:
        if self.kind is ExponentKind.LEBESGUE:
            return f"r={self.r:g}"
        return f"q={self.p:g};eta={self.eta:.6g}"

    def is_supercritical(self, params: FracParams) -> bool:
        """True when the exponent reaches or exceeds the sharp threshold"""
        critical = critical_exponents(params)
        if self.kind is ExponentKind.LEBESGUE:
            return self.exponent >= critical.r_star
        # a Sobolev pair (eta, q) diverges for the fundamental solution iff
        # (N - 2s + eta) q >= N
        return (params.kernel_exponent + self.eta) * self.p >= params.dim
