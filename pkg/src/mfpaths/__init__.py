"""mfpaths: mean-field-scaled SGD training of two-layer and deep networks,
dropout-stability measurement, and constructive loss-landscape paths."""

from .backend import backend_name, set_backend
from .core_math import Activation, RngStream
from .two_layer import LossKind

__version__ = "0.1.0"

__all__ = [
    "Activation",
    "LossKind",
    "RngStream",
    "backend_name",
    "set_backend",
    "__version__",
]
