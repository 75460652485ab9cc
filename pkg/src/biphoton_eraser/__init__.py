"""Delayed-choice quantum eraser: biphoton amplitudes, fringe model, click-stream
simulation and coincidence analysis."""

__version__ = "0.1.0"

from .errors import (ConfigError, EventFormatError, FitDegenerateError,  # noqa: E402
                     InsufficientDataError, InvalidParameterError, SamplingError)
from .params import ApparatusGeometry, BiphotonPacket  # noqa: E402

__all__ = [
    "__version__", "ApparatusGeometry", "BiphotonPacket", "ConfigError",
    "EventFormatError", "FitDegenerateError", "InsufficientDataError",
    "InvalidParameterError", "SamplingError",
]
