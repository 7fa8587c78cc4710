"""Haze removal toolkit for remote-sensing imagery.

Contains a small autodiff engine, an encoder-decoder dehazing network,
dark-channel baselines, quality metrics and dataset tooling.
"""

from .errors import (DegenerateClusterError, DehazeKitError, FormatError, GeoRangeError, GradCheckError,
                     ImageIOError, NumericError, ShapeError, TrainingError)
from .rng import Rng

__version__ = "0.1.0"

__all__ = ["Rng", "DehazeKitError", "ShapeError", "NumericError", "GradCheckError", "TrainingError",
           "ImageIOError", "FormatError", "GeoRangeError", "DegenerateClusterError"]
