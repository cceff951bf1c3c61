"""Correlation-network late fusion for two-stream action recognition scores.

The correlation head takes the outer product of a spatial and a temporal
class-score vector, row-normalises it, and classifies it with three dense
layers. Its logits are fused with the streams, optionally behind a
Shannon-entropy gate.
"""

from .errors import (
    ConfigError,
    CorrnetError,
    DataError,
    DataFormatError,
    DimensionError,
    DomainError,
)
from .fusion import FusionConfig, apply_fusion, search_threshold, shannon_gate
from .model import CorrnetParams, backward, forward, init_params, load_params, save_params
from .training import TrainConfig, train

__version__ = "0.1.0"

__all__ = [
    "ConfigError", "CorrnetError", "CorrnetParams", "DataError", "DataFormatError",
    "DimensionError", "DomainError", "FusionConfig", "TrainConfig", "apply_fusion",
    "backward", "forward", "init_params", "load_params", "save_params",
    "search_threshold", "shannon_gate", "train",
]
