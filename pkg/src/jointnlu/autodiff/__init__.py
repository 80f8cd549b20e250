"""Small reverse-mode differentiation kernel on top of numpy."""
from .gradcheck import grad_check, relative_error
from .ops import (
    ShapeError,
    add,
    add_bias,
    blend,
    concat_last_axis,
    conv1d_over_time,
    dropout,
    embedding_gather,
    mask_time,
    masked_cross_entropy,
    masked_mean_over_time,
    matmul,
    max_pool_over_time,
    mul,
    relu,
    reshape,
    scale,
    select_time,
    sigmoid,
    slice_last_axis,
    slice_rows,
    softmax_last_axis,
    stack_time,
    sum_all,
    tanh,
)
from .optim import AdamState, adam_step, clip_global_norm
from .recurrent import LSTMParams, bilstm, lstm_cell
from .tensor import Tape, Tensor, as_tensor, backward, current_tape

__all__ = [
    "AdamState", "LSTMParams", "ShapeError", "Tape", "Tensor",
    "adam_step", "add", "add_bias", "as_tensor", "backward", "bilstm", "blend",
    "clip_global_norm", "concat_last_axis", "conv1d_over_time", "current_tape",
    "dropout", "embedding_gather", "grad_check", "lstm_cell", "mask_time",
    "masked_cross_entropy", "masked_mean_over_time", "matmul", "max_pool_over_time",
    "mul", "relative_error", "relu", "reshape", "scale", "select_time", "sigmoid",
    "slice_last_axis", "slice_rows", "softmax_last_axis", "stack_time", "sum_all", "tanh",
]
