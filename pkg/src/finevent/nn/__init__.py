"""Minimal reverse-mode differentiable computation core."""

from .checkpoint import Checkpoint, CheckpointError, load_checkpoint, save_checkpoint
from .gradcheck import grad_check
from .params import (
    AdamState,
    MissingGradientError,
    ParamStore,
    adam_step,
    apply_word_vectors,
    load_word_vectors,
)
from .recurrent import bilstm, lstm_direction
from .tensor import (
    NonFiniteError,
    ShapeError,
    Tensor,
    add,
    backward,
    concat,
    constant,
    cross_entropy,
    dropout,
    embedding,
    matmul,
    mean_pool,
    mul,
    no_grad,
    relu,
    scale,
    sequence_cross_entropy,
    sigmoid,
    softmax,
    sub,
    sum_all,
    tanh,
    transpose,
    zeros,
)

__all__ = [
    "AdamState",
    "Checkpoint",
    "CheckpointError",
    "MissingGradientError",
    "NonFiniteError",
    "ParamStore",
    "ShapeError",
    "Tensor",
    "adam_step",
    "add",
    "apply_word_vectors",
    "backward",
    "bilstm",
    "concat",
    "constant",
    "cross_entropy",
    "dropout",
    "embedding",
    "grad_check",
    "load_checkpoint",
    "load_word_vectors",
    "lstm_direction",
    "matmul",
    "mean_pool",
    "mul",
    "no_grad",
    "relu",
    "save_checkpoint",
    "scale",
    "sequence_cross_entropy",
    "sigmoid",
    "softmax",
    "sub",
    "sum_all",
    "tanh",
    "transpose",
    "zeros",
]
