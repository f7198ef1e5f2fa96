"""Dense arrays with reverse-mode gradients, recurrent cells and the optimizer."""

from .autodiff import (
    Parameter,
    Tape,
    Tensor,
    backward,
    layer_norm,
    linear,
    self_normalized_nll,
    softmax_with_logz,
)
from .cells import LSTMWeights, dropout_mask, feedforward_cell, lstm_cell, lstm_sequence
from .optim import OptimizerConfig, ema_update, unit_norm_then_adam, warmup_decay

__all__ = [
    "LSTMWeights",
    "OptimizerConfig",
    "Parameter",
    "Tape",
    "Tensor",
    "backward",
    "dropout_mask",
    "ema_update",
    "feedforward_cell",
    "layer_norm",
    "linear",
    "lstm_cell",
    "lstm_sequence",
    "self_normalized_nll",
    "softmax_with_logz",
    "unit_norm_then_adam",
    "warmup_decay",
]
