"""
Exception hierarchy for fracdual.

Every operation raises one of these; callers can catch FracDualError to
handle any library failure.
"""


class FracDualError(Exception):
    """Base class for all fracdual errors"""


class ParameterError(FracDualError, ValueError):
    """Invalid construction parameters (dimension, order, radii, ...)"""


class ExponentError(FracDualError, ValueError):
    """An exponent lies outside the range an operation accepts"""


class SingularPointError(FracDualError, ValueError):
    """Evaluation requested at a singular point of a kernel or potential"""


class GridError(FracDualError, ValueError):
    """Grid geometry is inconsistent with the requested operation"""


class BoxTooSmallError(GridError):
    """The target box does not contain the support that must be represented"""


class BandwidthError(GridError):
    """Mollifier bandwidth is unresolved on the target grid"""


class BoundaryProximityError(GridError):
    """Evaluation point too close to the box boundary"""


class InsufficientDecayError(GridError):
    """Field does not decay at the box boundary as a periodic method requires"""


class SupportError(GridError):
    """A compactly supported input leaks out of its box"""


class NonFiniteValueError(FracDualError, ArithmeticError):
    """A quadrature produced a non-finite value"""


class ScheduleError(FracDualError, ValueError):
    """Refinement or excision schedule is malformed"""


class ConfigError(FracDualError, ValueError):
    """Experiment configuration failed validation"""
