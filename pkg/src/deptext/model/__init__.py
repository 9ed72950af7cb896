"""Multi-task bidirectional GRU encoder with pluggable pooling."""
from . import kernels
from .checkpoint import Checkpoint, CheckpointError, load_checkpoint, save_checkpoint
from .network import (
    ForwardResult,
    InitSpec,
    ModelConfig,
    backward,
    forward,
    init_model,
    lengths_from_mask,
    param_names,
    predict,
    reverse_index,
    xavier_bound,
)
from .pooling import POOLING_METHODS, EmptySequenceError, attention_weights, pool

__all__ = [
    "Checkpoint", "CheckpointError", "load_checkpoint", "save_checkpoint",
    "ForwardResult", "InitSpec", "ModelConfig", "backward", "forward", "init_model",
    "lengths_from_mask", "param_names", "predict", "reverse_index", "xavier_bound",
    "POOLING_METHODS", "EmptySequenceError", "attention_weights", "pool",
]
