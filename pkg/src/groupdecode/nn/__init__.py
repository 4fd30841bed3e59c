"""Neural network building blocks: conv kernels, classifier, Adam, checkpoints."""

from .adam import Adam
from .backend import backend_name, compiled_available, conv1d_backward, conv1d_forward
from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .model import (
    ACTIVATIONS,
    ModelConfig,
    WavenetClassifier,
    asinh_activation,
    asinh_derivative,
    concat_embedding,
    cross_entropy,
    dropout,
    softmax,
    temporal_downsample,
)

__all__ = [
    "ACTIVATIONS",
    "Adam",
    "CheckpointError",
    "ModelConfig",
    "WavenetClassifier",
    "asinh_activation",
    "asinh_derivative",
    "backend_name",
    "compiled_available",
    "concat_embedding",
    "conv1d_backward",
    "conv1d_forward",
    "cross_entropy",
    "dropout",
    "load_checkpoint",
    "save_checkpoint",
    "softmax",
    "temporal_downsample",
]
