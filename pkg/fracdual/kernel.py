"""
Riesz kernel, mollification of atomic measures and radial cut-off functions.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from enum import Enum
from typing import Union

import numpy as np
from scipy.special import gammainc, gamma

from .core import AtomicMeasure, Ball, Box, FracParams, GridFunction, as_points
from .exceptions import BandwidthError, BoxTooSmallError, ParameterError, SingularPointError

logger = logging.getLogger(__name__)

GAUSSIAN_TRUNCATION = 6.0
BUMP_POWER = 3


def riesz_kernel(x: np.ndarray, params: FracParams) -> Union[float, np.ndarray]:
    """C_{N,s} |x|^{-(N-2s)} for a point or a stack of points"""
    single = np.ndim(x) == 1
    pts = as_points(x, params.dim)
    radii = np.linalg.norm(pts, axis=1)
    if np.any(radii == 0):
        raise SingularPointError("the Riesz kernel is singular at x = 0")
    values = params.potential_constant * radii ** (-params.kernel_exponent)
    return float(values[0]) if single else values


class MollifierProfile(str, Enum):
    GAUSSIAN_TRUNCATED = "gaussian_truncated"
    POLYNOMIAL_BUMP = "polynomial_bump"


@dataclass(frozen=True)
class MollifierSpec:
    bandwidth: float
    profile: MollifierProfile = MollifierProfile.GAUSSIAN_TRUNCATED

    def __post_init__(self):
        if not (math.isfinite(self.bandwidth) and self.bandwidth > 0):
            raise ParameterError(f"mollifier bandwidth must be > 0, got {self.bandwidth!r}")
        object.__setattr__(self, "profile", MollifierProfile(self.profile))

    @property
    def support_radius(self) -> float:
        if self.profile is MollifierProfile.POLYNOMIAL_BUMP:
            return self.bandwidth
        return GAUSSIAN_TRUNCATION * self.bandwidth

    def density(self, offsets: np.ndarray) -> np.ndarray:
        """Analytically normalised profile at offsets of shape (M, N)"""
        dim = offsets.shape[1]
        eps = self.bandwidth
        r2 = np.sum(offsets**2, axis=1) / eps**2
        if self.profile is MollifierProfile.POLYNOMIAL_BUMP:
            # int_{B_1} (1-|x|^2)^k dx = pi^{N/2} Gamma(k+1) / Gamma(k+1+N/2)
            mass = math.pi ** (dim / 2) * gamma(BUMP_POWER + 1) / gamma(BUMP_POWER + 1 + dim / 2)
            values = np.where(r2 < 1.0, (1.0 - np.minimum(r2, 1.0)) ** BUMP_POWER, 0.0)
            return values / (mass * eps**dim)
        # P(chi^2_N <= 36) is the mass kept by the hard truncation at 6 eps
        kept = gammainc(dim / 2, GAUSSIAN_TRUNCATION**2 / 2)
        values = np.where(r2 <= GAUSSIAN_TRUNCATION**2, np.exp(-0.5 * r2), 0.0)
        return values / ((2 * math.pi) ** (dim / 2) * eps**dim * kept)


def mollify(mu: AtomicMeasure, spec: MollifierSpec, box: Box, resolution: int) -> GridFunction:
    """
    Smooth the atoms of mu into a grid density f_eps on box.

    Each atom's sampled profile is rescaled so that its discrete mass equals
    the atom weight; the result is linear in mu and has L^1 mass at most
    |mu|(R^N).
    """
    if box.dim != mu.dim:
        raise ParameterError(f"box dimension {box.dim} != measure dimension {mu.dim}")
    grid = GridFunction.zeros(box, resolution)
    h = grid.spacing
    if spec.bandwidth < 2 * h:
        raise BandwidthError(
            f"bandwidth {spec.bandwidth:.4g} is below two grid cells (h = {h:.4g})"
        )
    for location in mu.points:
        if not box.contains_ball(location, spec.support_radius):
            raise BoxTooSmallError(
                f"box of half width {box.half_width} does not contain the mollified atom at "
                f"{location.tolist()} (mollifier support {spec.support_radius:.4g})"
            )
    if len(mu) == 0:
        return grid

    points = grid.points()
    values = np.zeros(points.shape[0])
    for location, weight in zip(mu.points, mu.weights):
        profile = spec.density(points - location)
        discrete_mass = profile.sum() * grid.cell_volume
        values += weight * profile / discrete_mass
    logger.debug("mollified %d atoms on %d^%d grid (eps=%g)", len(mu), resolution, mu.dim, spec.bandwidth)
    return grid.with_values(values.reshape(grid.values.shape))


def profile_mass(spec: MollifierSpec, dim: int, resolution: int = 64) -> float:
    """Midpoint integral of the analytic profile over its support cube"""
    half_width = spec.support_radius
    grid = GridFunction.zeros(Box.cube(dim, half_width), resolution)
    return float(spec.density(grid.points()).sum() * grid.cell_volume)


def _smoothstep(t: np.ndarray) -> np.ndarray:
    """C^2 quintic ramp from 0 at t <= 0 to 1 at t >= 1"""
    t = np.clip(t, 0.0, 1.0)
    return t**3 * (10.0 - 15.0 * t + 6.0 * t**2)


@dataclass(frozen=True)
class CutoffFunction:
    """psi = 1 on the ball, 0 beyond radius + margin, C^2 radial ramp between"""

    ball: Ball
    margin: float

    def __call__(self, points: np.ndarray) -> np.ndarray:
        pts = as_points(points, self.ball.dim)
        r = np.linalg.norm(pts - self.ball.center, axis=1)
        return 1.0 - _smoothstep((r - self.ball.radius) / self.margin)

    def on_grid(self, box: Box, resolution: int) -> GridFunction:
        return GridFunction.from_function(box, resolution, self)

    @property
    def support_radius(self) -> float:
        return self.ball.radius + self.margin


def cutoff(ball: Ball, margin: float) -> CutoffFunction:
    if not (math.isfinite(margin) and margin > 0):
        raise ParameterError(f"cut-off margin must be > 0, got {margin!r}")
    return CutoffFunction(ball, float(margin))


def bump_mass(dim: int, width: float) -> float:
    """Integral of the radial bump (1 - |x|^2/width^2)^3 over its support"""
    return (
        math.pi ** (dim / 2) * gamma(BUMP_POWER + 1) / gamma(BUMP_POWER + 1 + dim / 2) * width**dim
    )


def unit_bump(dim: int, width: float, center=None):
    """Unit-mass radial polynomial bump of radius width, as an evaluable field"""
    c = np.zeros(dim) if center is None else np.asarray(center, dtype=float)
    mass = bump_mass(dim, width)

    def field(points: np.ndarray) -> np.ndarray:
        pts = as_points(points, dim)
        r2 = np.sum((pts - c) ** 2, axis=1) / width**2
        return np.where(r2 < 1.0, (1.0 - np.minimum(r2, 1.0)) ** BUMP_POWER, 0.0) / mass

    return field


__all__ = [
    "riesz_kernel",
    "MollifierProfile",
    "MollifierSpec",
    "mollify",
    "profile_mass",
    "CutoffFunction",
    "cutoff",
    "bump_mass",
    "unit_bump",
]
