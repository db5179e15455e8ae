import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from fracdual.core import Box, FracParams, GridFunction

settings.register_profile("default", max_examples=25, deadline=None)
settings.register_profile(
    "ci", max_examples=100, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile(os.getenv("HYPOTHESIS_PROFILE", "default"))


@pytest.fixture
def params2d():
    return FracParams.standard(2, 0.75)


@pytest.fixture
def params3d():
    return FracParams.standard(3, 0.6)


@pytest.fixture
def gaussian2d():
    """exp(-|x|^2/2) on [-8, 8]^2 at 128 cells per axis"""
    box = Box.cube(2, 8.0)
    return GridFunction.from_function(box, 128, lambda x: np.exp(-0.5 * np.sum(x**2, axis=1)))
