"""
(-Delta)^s applied to sampled fields.

Two independent evaluators: a principal-value lattice quadrature with a
Taylor correction of the singular near field and an explicit far-field tail,
and a discrete Fourier multiplier used as its oracle. The symmetric
bilinear form behind the distributional identity shares the P.V. pieces.
"""

from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass
from enum import Enum
from functools import lru_cache
from typing import Optional, Sequence

import numpy as np
from scipy import fft
from scipy.integrate import quad
from scipy.special import erf, gamma

from .core import Box, FracParams, GridFunction, as_points, sphere_area
from .exceptions import (
    BoundaryProximityError,
    InsufficientDecayError,
    NonFiniteValueError,
    ParameterError,
)

logger = logging.getLogger(__name__)

DEFAULT_DELTA_CELLS = 8
SPECTRAL_DECAY_TOLERANCE = 1e-8
IMAGE_SHELLS = 3
PAIR_CHUNK = 4_000_000


# ============================================================
# Radial partition and cached lattice constants
# ============================================================


def _ramp(t: np.ndarray) -> np.ndarray:
    """C-infinity step from 0 (t <= 0) to 1 (t >= 1)"""
    t = np.clip(np.asarray(t, dtype=float), 0.0, 1.0)
    with np.errstate(divide="ignore", over="ignore"):
        left = np.where(t > 0, np.exp(-1.0 / np.where(t > 0, t, 1.0)), 0.0)
        right = np.where(t < 1, np.exp(-1.0 / np.where(t < 1, 1.0 - t, 1.0)), 0.0)
    return left / (left + right)


def near_partition(rho: np.ndarray) -> np.ndarray:
    """chi(rho): 1 for rho <= 1/2, 0 for rho >= 1, smooth in between"""
    return 1.0 - _ramp(2.0 * np.asarray(rho, dtype=float) - 1.0)


def _unit_lattice(dim: int, reach: int) -> np.ndarray:
    axis = np.arange(-reach, reach + 1, dtype=float)
    mesh = np.meshgrid(*([axis] * dim), indexing="ij")
    return np.sqrt(sum(m**2 for m in mesh)).reshape(-1)


@lru_cache(maxsize=64)
def singular_defect(dim: int, order: float, cells: float) -> float:
    """
    int chi |z|^{2-N-2s} dz minus its lattice sum over z != 0, on the unit
    lattice with delta = cells. Scales as h^{2-2s}.
    """
    power = 2.0 - dim - 2.0 * order
    radial = lambda r: float(near_partition(r / cells)) * r ** (1.0 - 2.0 * order)
    inner = (cells / 2) ** (2.0 - 2.0 * order) / (2.0 - 2.0 * order)
    integral = sphere_area(dim) * (inner + quad(radial, cells / 2, cells, limit=200)[0])
    r = _unit_lattice(dim, int(math.ceil(cells)))
    r = r[r > 0]
    lattice = float(np.sum(near_partition(r / cells) * r**power))
    return integral - lattice


@lru_cache(maxsize=64)
def _cube_exterior_unit(dim: int, beta: float) -> float:
    gamma_exp = beta - dim
    density = lambda t: (
        t**gamma_exp * dim * erf(t) ** (dim - 1) * (2.0 / math.sqrt(math.pi)) * math.exp(-t * t)
    )
    moment = quad(density, 0.0, np.inf, limit=200)[0]
    sphere_mean = 2.0 * math.pi ** (dim / 2) / gamma((gamma_exp + dim) / 2) * moment
    return sphere_mean / gamma_exp


def cube_exterior_integral(dim: int, beta: float, half_width: float) -> float:
    """int over R^N minus [-L, L]^N of |z|^{-beta}, beta > N"""
    if beta <= dim:
        raise ParameterError(f"exterior integral diverges for beta={beta} <= N={dim}")
    return half_width ** (dim - beta) * _cube_exterior_unit(dim, float(beta))


def box_exterior_integral(box: Box, x: Sequence[float], beta: float) -> float:
    """
    int over R^N minus box of |x - y|^{-beta} dy for x inside the box, beta > N.

    Uses |z|^{-beta} = 2/Gamma(beta/2) int t^{beta-1} exp(-t^2 |z|^2) dt, under
    which the box factorises into one erf pair per axis.
    """
    n = box.dim
    if beta <= n:
        raise ParameterError(f"exterior integral diverges for beta={beta} <= N={n}")
    point = np.asarray(x, dtype=float).reshape(-1)
    below = (point - box.lower).tolist()
    above = (box.upper - point).tolist()
    nearest = min(below + above)
    if nearest <= 0:
        raise ParameterError(f"point {point.tolist()} is not inside the box")

    def integrand(t: float) -> float:
        missed = [0.5 * (math.erfc(t * a) + math.erfc(t * b)) for a, b in zip(below, above)]
        inside = math.prod(1.0 - m for m in missed)
        outside = 1.0 - inside if inside < 0.5 else -math.expm1(sum(math.log1p(-m) for m in missed))
        return t ** (beta - n - 1.0) * outside

    split = 1.0 / nearest
    total = quad(integrand, 0.0, split, limit=200)[0] + quad(integrand, split, np.inf, limit=200)[0]
    return 2.0 * math.pi ** (n / 2) / gamma(beta / 2) * total


# ============================================================
# Far-field tail
# ============================================================


class TailKind(str, Enum):
    ZERO = "zero"
    CONSTANT = "constant"
    POWER = "power"


@dataclass(frozen=True)
class TailModel:
    """
    Values of u outside its box: zero, a constant u_inf, or
    A |y - c|^{-(N-2s)} about the box centre c.
    """

    kind: TailKind = TailKind.ZERO
    amplitude: float = 0.0

    @classmethod
    def zero(cls) -> "TailModel":
        return cls(TailKind.ZERO, 0.0)

    @classmethod
    def constant(cls, value: float) -> "TailModel":
        return cls(TailKind.CONSTANT, float(value))

    @classmethod
    def power(cls, amplitude: float) -> "TailModel":
        return cls(TailKind.POWER, float(amplitude))

    @classmethod
    def fit(cls, u: GridFunction, params: FracParams, rtol: float = 1e-12) -> "TailModel":
        """Constant tail if u is flat on the boundary layer, else the power law fitted there"""
        values, points = boundary_layer(u)
        scale = max(float(np.max(np.abs(u.values))), np.finfo(float).tiny)
        if np.ptp(values) <= rtol * scale:
            level = float(np.mean(values))
            return cls.zero() if abs(level) <= rtol * scale else cls.constant(level)
        radii = np.linalg.norm(points - u.box.center, axis=1)
        return cls.power(float(np.mean(values * radii**params.kernel_exponent)))

    def outside_integral(self, x: np.ndarray, outer_mass: float, box: Box, params: FracParams) -> float:
        """
        int_{R^N \\ box} u(y) |x - y|^{-N-2s} dy.

        outer_mass is int_{R^N \\ box} |x - y|^{-N-2s} dy at the same x. The
        power tail uses the even second-order expansion of the kernel about
        the box centre.
        """
        if self.kind is TailKind.ZERO:
            return 0.0
        if self.kind is TailKind.CONSTANT:
            return self.amplitude * outer_mass
        n = params.dim
        m = n + 2.0 * params.order
        beta = params.kernel_exponent + m
        d2 = float(np.sum((np.asarray(x) - box.center) ** 2))
        t0 = cube_exterior_integral(n, beta, box.half_width)
        t2 = cube_exterior_integral(n, beta + 2.0, box.half_width)
        return self.amplitude * (t0 + 0.5 * m * ((m + 2.0) / n - 1.0) * d2 * t2)


def boundary_layer(u: GridFunction):
    """Values and cell centres of the outermost layer of cells"""
    index = np.indices(u.values.shape).reshape(u.dim, -1).T
    mask = np.any((index == 0) | (index == u.resolution - 1), axis=1)
    return u.values.reshape(-1)[mask], u.points()[mask]


# ============================================================
# Principal-value quadrature
# ============================================================


def _discrete_laplacian(u: GridFunction, index: Sequence[int]) -> float:
    h = u.spacing
    centre = u.values[tuple(index)]
    total = 0.0
    for axis in range(u.dim):
        plus = list(index)
        minus = list(index)
        plus[axis] += 1
        minus[axis] -= 1
        total += u.values[tuple(plus)] - 2.0 * centre + u.values[tuple(minus)]
    return total / h**2


def _boundary_distance(box: Box, point: np.ndarray) -> float:
    return float(min(np.min(point - box.lower), np.min(box.upper - point)))


def _resolve_delta(u: GridFunction, delta: Optional[float]) -> float:
    h = u.spacing
    delta = DEFAULT_DELTA_CELLS * h if delta is None else float(delta)
    if delta < 2 * h:
        raise ParameterError(f"delta={delta:.4g} must span at least two grid cells (h={h:.4g})")
    return delta


def frac_laplacian_pv(
    u: GridFunction,
    x: Sequence[float],
    params: FracParams,
    delta: Optional[float] = None,
    tail: Optional[TailModel] = None,
) -> float:
    """
    c_{N,s} P.V. int (u(x) - u(y)) / |x - y|^{N+2s} dy at the cell centre x.

    The lattice sum over the box is corrected near x with the quadratic
    Taylor term against the partition chi_delta, and the exterior of the box
    is integrated exactly against u(x) and the tail model.
    """
    index = u.index_of(x)
    return _pv_at(u, index, params, _resolve_delta(u, delta), tail or TailModel.fit(u, params))


def frac_laplacian_pv_many(
    u: GridFunction,
    points: np.ndarray,
    params: FracParams,
    delta: Optional[float] = None,
    tail: Optional[TailModel] = None,
) -> np.ndarray:
    pts = as_points(points, u.dim)
    delta = _resolve_delta(u, delta)
    tail = tail or TailModel.fit(u, params)
    return np.array([_pv_at(u, u.index_of(p), params, delta, tail) for p in pts])


def _pv_at(u: GridFunction, index, params: FracParams, delta: float, tail: TailModel) -> float:
    n, s, h = u.dim, params.order, u.spacing
    centre = u.center_of(index)
    if _boundary_distance(u.box, centre) < delta * (1 - 1e-12):
        raise BoundaryProximityError(
            f"point {centre.tolist()} lies within delta={delta:.4g} of the box boundary"
        )
    cells = delta / h
    r = np.linalg.norm(u.points() - centre, axis=1)
    kernel = np.zeros_like(r)
    np.power(r, -(n + 2 * s), out=kernel, where=r > 0)
    u_x = float(u.values[index])

    lattice = float(np.sum((u_x - u.values.reshape(-1)) * kernel)) * u.cell_volume
    near = -_discrete_laplacian(u, index) / (2 * n) * singular_defect(n, s, cells) * h ** (2 - 2 * s)
    outer_mass = box_exterior_integral(u.box, centre, n + 2 * s)
    outside = u_x * outer_mass - tail.outside_integral(centre, outer_mass, u.box, params)

    value = params.operator_constant * (lattice + near + outside)
    if not math.isfinite(value):
        raise NonFiniteValueError(f"P.V. quadrature at {centre.tolist()} is not finite")
    return value


# ============================================================
# Spectral oracle
# ============================================================


def frac_laplacian_spectral(
    u: GridFunction, params: FracParams, image_correction: bool = True
) -> GridFunction:
    """
    Fourier multiplier |xi|^{2s} on the periodised box.

    With image_correction the leading far field of the periodic copies,
    -c_{N,s} mass |x - c - mP|^{-N-2s} for |m|_inf <= 3, is added back.
    """
    values = u.values
    scale = max(1.0, float(np.max(np.abs(values))))
    edge, _ = boundary_layer(u)
    if np.max(np.abs(edge)) > SPECTRAL_DECAY_TOLERANCE * scale:
        raise InsufficientDecayError(
            f"boundary values reach {np.max(np.abs(edge)):.3g}; periodisation needs < "
            f"{SPECTRAL_DECAY_TOLERANCE:g}"
        )
    if not np.any(values):
        return u.with_values(np.zeros_like(values))

    n, h = u.resolution, u.spacing
    freq = 2.0 * np.pi * fft.fftfreq(n, d=h)
    mesh = np.meshgrid(*([freq] * u.dim), indexing="ij")
    multiplier = np.sqrt(sum(k**2 for k in mesh)) ** (2 * params.order)
    result = np.real(fft.ifftn(multiplier * fft.fftn(values)))

    if image_correction:
        result = result + _image_far_field(u, params).reshape(result.shape)
    return u.with_values(result)


def _image_far_field(u: GridFunction, params: FracParams) -> np.ndarray:
    period = 2.0 * u.box.half_width
    offsets = u.points() - u.box.center
    mass = u.integral()
    correction = np.zeros(offsets.shape[0])
    shells = range(-IMAGE_SHELLS, IMAGE_SHELLS + 1)
    for image in itertools.product(shells, repeat=u.dim):
        if not any(image):
            continue
        shifted = offsets + period * np.asarray(image, dtype=float)
        correction += np.linalg.norm(shifted, axis=1) ** (-(u.dim + 2 * params.order))
    return params.operator_constant * mass * correction


# ============================================================
# Distributional identity
# ============================================================


def bilinear_form(
    u: GridFunction,
    v: GridFunction,
    params: FracParams,
    delta: Optional[float] = None,
    u_tail: Optional[TailModel] = None,
    v_tail: Optional[TailModel] = None,
) -> float:
    """
    c_{N,s}/2 int int (u(x)-u(y)) (v(x)-v(y)) / |x-y|^{N+2s} dx dy.

    Double midpoint sum without the diagonal, the symmetric Taylor correction
    (E / 2N) sum grad u . grad v h^N, and the box/exterior pairs through the
    tail models. Pairs with both points outside the box are dropped, which
    is exact when either field vanishes there.
    """
    u._check_same_grid(v)
    n, s, h = u.dim, params.order, u.spacing
    delta = _resolve_delta(u, delta)
    u_tail = u_tail or TailModel.fit(u, params)
    v_tail = v_tail or TailModel.fit(v, params)
    points = u.points()
    uf = u.values.reshape(-1)
    vf = v.values.reshape(-1)
    total = points.shape[0]
    hN = u.cell_volume

    pairs = 0.0
    exterior = 0.0
    rows = max(PAIR_CHUNK // total, 1)
    needs_outer = (uf * vf != 0) | (
        (u_tail.kind is TailKind.CONSTANT) & (vf != 0)
    ) | ((v_tail.kind is TailKind.CONSTANT) & (uf != 0))

    for start in range(0, total, rows):
        block = slice(start, min(start + rows, total))
        r = np.linalg.norm(points[block, None, :] - points[None, :, :], axis=2)
        kernel = np.zeros_like(r)
        np.power(r, -(n + 2 * s), out=kernel, where=r > 0)
        du = uf[block, None] - uf[None, :]
        dv = vf[block, None] - vf[None, :]
        pairs += float(np.sum(du * dv * kernel))

        for local in np.flatnonzero(needs_outer[block]):
            j = start + local
            if _boundary_distance(u.box, points[j]) < delta * (1 - 1e-12):
                raise BoundaryProximityError(
                    f"exterior pairing needed at {points[j].tolist()}, within delta of the boundary"
                )
            outer_mass = box_exterior_integral(u.box, points[j], n + 2 * s)
            exterior += uf[j] * vf[j] * outer_mass
            exterior -= vf[j] * u_tail.outside_integral(points[j], outer_mass, u.box, params)
            exterior -= uf[j] * v_tail.outside_integral(points[j], outer_mass, u.box, params)

    # power tails contribute where the other field is non-zero, without the lattice mass
    for own, other, tail in ((uf, vf, u_tail), (vf, uf, v_tail)):
        if tail.kind is TailKind.POWER:
            for j in np.flatnonzero((other != 0) & ~needs_outer):
                exterior -= other[j] * tail.outside_integral(points[j], 0.0, u.box, params)

    grad_u = np.gradient(u.values, h)
    grad_v = np.gradient(v.values, h)
    gradient_pair = float(sum(np.sum(a * b) for a, b in zip(grad_u, grad_v)))
    near = singular_defect(n, s, delta / h) * h ** (2 - 2 * s) / (2 * n) * gradient_pair * hN

    value = params.operator_constant * (0.5 * pairs * hN * hN + near + exterior * hN)
    if not math.isfinite(value):
        raise NonFiniteValueError("bilinear form is not finite")
    return value


def check_distributional_identity(
    u: GridFunction,
    f: GridFunction,
    phi: GridFunction,
    params: FracParams,
    delta: Optional[float] = None,
    tail: Optional[TailModel] = None,
) -> float:
    """|B(u, phi) - int f phi|, the weak-form residual of (-Delta)^s u = f"""
    form = bilinear_form(u, phi, params, delta=delta, u_tail=tail, v_tail=TailModel.zero())
    residual = abs(form - f.pair(phi))
    logger.debug("distributional identity: form=%.6g residual=%.3g", form, residual)
    return residual
