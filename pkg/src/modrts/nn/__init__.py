"""Minimal numpy neural-network kernel: layers, optimizers, checkpoints."""
from .checkpoint import CheckpointError, checkpoint_hash, load_checkpoint, save_checkpoint
from .functional import (
    bce_with_logits,
    categorical_sample,
    entropy,
    masked_softmax,
    relu,
    sigmoid,
    softmax,
    tanh,
)
from .gradcheck import check_gradients, finite_difference_errors
from .layers import LSTM, Conv2d, Dense, Flatten, Params, orthogonal, uniform_fan_in
from .network import (
    Sequential,
    SpecError,
    add_params,
    clone_params,
    params_close,
    zeros_like_params,
)
from .optim import SGD, Adam, make_optimizer

__all__ = [
    "CheckpointError", "checkpoint_hash", "load_checkpoint", "save_checkpoint",
    "bce_with_logits", "categorical_sample", "entropy", "masked_softmax",
    "relu", "sigmoid", "softmax", "tanh",
    "check_gradients", "finite_difference_errors",
    "LSTM", "Conv2d", "Dense", "Flatten", "Params", "orthogonal", "uniform_fan_in",
    "Sequential", "SpecError", "add_params", "clone_params", "params_close",
    "zeros_like_params",
    "SGD", "Adam", "make_optimizer",
]
