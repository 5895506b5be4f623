"""Simulation and suppression of rigid-motion artifacts in MR volumes.

The package covers the full workflow: synthetic phantoms, k-space motion
corruption with a convolution-model cross-check, foreground normalization,
a small encoder-decoder network trained with manual backpropagation and
RMSprop, and evaluation by foreground percentage error and a
self-contained NIQE implementation.
"""

__version__ = "0.1.0"

from . import metrics, motion, nn, phantom, pipeline, preprocess, volume
from .errors import (
    BoundsError,
    DegenerateInputError,
    DimensionError,
    FitError,
    MrimotionError,
    NumericalError,
    OracleLimitError,
    TrainingDivergenceError,
    ValidationError,
)

__all__ = [
    "BoundsError",
    "DegenerateInputError",
    "DimensionError",
    "FitError",
    "MrimotionError",
    "NumericalError",
    "OracleLimitError",
    "TrainingDivergenceError",
    "ValidationError",
    "__version__",
    "metrics",
    "motion",
    "nn",
    "phantom",
    "pipeline",
    "preprocess",
    "volume",
]
