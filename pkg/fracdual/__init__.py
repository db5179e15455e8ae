"""
fracdual - duality solutions of (-Delta)^s u = mu for finite measures

Potentials of measures and densities, the fractional Laplacian on grids,
excised Lebesgue and Sobolev norms, and the mollify-solve-converge scheme.
"""

from .core import AtomicMeasure, Ball, Box, ExponentSpec, FracParams, GridFunction, critical_exponents
from .duality import TestBattery, duality_residual, residual_refinement, solve_duality, uniqueness_check, young_check
from .exceptions import FracDualError
from .fraclap import bilinear_form, frac_laplacian_pv, frac_laplacian_spectral
from .kernel import MollifierSpec, mollify, riesz_kernel
from .norms import gagliardo_seminorm, lebesgue_norm, regularity_sweep
from .potential import FundamentalSolution, potential_of_density, potential_of_measure

__version__ = "1.0.0"
__all__ = [
    'AtomicMeasure',
    'Ball',
    'Box',
    'ExponentSpec',
    'FracParams',
    'GridFunction',
    'critical_exponents',
    'TestBattery',
    'solve_duality',
    'duality_residual',
    'residual_refinement',
    'uniqueness_check',
    'young_check',
    'FracDualError',
    'bilinear_form',
    'frac_laplacian_pv',
    'frac_laplacian_spectral',
    'MollifierSpec',
    'mollify',
    'riesz_kernel',
    'gagliardo_seminorm',
    'lebesgue_norm',
    'regularity_sweep',
    'FundamentalSolution',
    'potential_of_density',
    'potential_of_measure',
]
