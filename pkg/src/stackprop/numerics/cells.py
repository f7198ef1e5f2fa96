"""Layer-normalized recurrent and feed-forward cells built from tape primitives."""

from __future__ import annotations

from typing import NamedTuple

import numpy as np

from .autodiff import (
    Tensor,
    add,
    layer_norm,
    linear,
    lstm_pointwise,
    mul,
    relu,
    stack,
    unstack,
)


class LSTMWeights(NamedTuple):
    w_x: Tensor  # (4h, d_in)
    w_h: Tensor  # (4h, h)
    bias: Tensor  # (4h,)
    ln_x_gain: Tensor
    ln_x_bias: Tensor
    ln_h_gain: Tensor
    ln_h_bias: Tensor

    @property
    def hidden_dim(self) -> int:
        return self.w_h.shape[1]


def lstm_gates_from_input(x: Tensor, w: LSTMWeights) -> Tensor:
    """Layer-normalized input contribution to the gates; works row-wise on a batch of steps."""
    return layer_norm(linear(x, w.w_x), w.ln_x_gain, w.ln_x_bias)


def lstm_step(x_gates: Tensor, h_prev: Tensor, c_prev: Tensor, w: LSTMWeights) -> tuple[Tensor, Tensor]:
    h_gates = layer_norm(linear(h_prev, w.w_h), w.ln_h_gain, w.ln_h_bias)
    return lstm_pointwise(add(add(x_gates, h_gates), w.bias), c_prev)


def lstm_cell(x: Tensor, h_prev: Tensor, c_prev: Tensor, w: LSTMWeights) -> tuple[Tensor, Tensor]:
    """One LSTM step.

    ``gates = LN(W_x x) + LN(W_h h_prev) + b`` with gate order [i, f, o, g], then
    ``c = f*c_prev + i*g`` and ``h = o*tanh(c)``.
    """
    if x.shape[-1] != w.w_x.shape[1] or h_prev.shape != (w.hidden_dim,) or c_prev.shape != h_prev.shape:
        raise ValueError(
            f"lstm_cell shape mismatch: x {x.shape}, h {h_prev.shape}, c {c_prev.shape}, "
            f"W_x {w.w_x.shape}, W_h {w.w_h.shape}"
        )
    return lstm_step(lstm_gates_from_input(x, w), h_prev, c_prev, w)


def lstm_sequence(
    xs: Tensor,
    w: LSTMWeights,
    reverse: bool = False,
    input_mask: np.ndarray | None = None,
    recurrent_mask: np.ndarray | None = None,
) -> Tensor:
    """Run an LSTM over the rows of ``xs`` and return the hidden states, one row per input row.

    With ``reverse`` the scan goes from the last row to the first, but row ``t``
    of the result is still the state emitted while reading row ``t``.
    ``input_mask`` is per step (same shape as ``xs``); ``recurrent_mask`` is one
    vector applied to ``h_prev`` at every step.
    """
    tape = xs.tape
    if input_mask is not None:
        xs = mul(xs, input_mask)
    x_gates = unstack(lstm_gates_from_input(xs, w))
    hd = w.hidden_dim
    h = tape.constant(np.zeros(hd))
    c = tape.constant(np.zeros(hd))
    steps = range(xs.shape[0] - 1, -1, -1) if reverse else range(xs.shape[0])
    outs: list[Tensor] = [None] * xs.shape[0]  # type: ignore[list-item]
    for t in steps:
        h_in = mul(h, recurrent_mask) if recurrent_mask is not None else h
        h, c = lstm_step(x_gates[t], h_in, c, w)
        outs[t] = h
    return stack(outs)


def feedforward_cell(x: Tensor, w: Tensor, b: Tensor, ln_gain: Tensor, ln_bias: Tensor) -> Tensor:
    """``relu(LN(W x + b))``."""
    if x.shape[-1] != w.shape[1]:
        raise ValueError(f"feedforward_cell shape mismatch: x {x.shape}, W {w.shape}")
    return relu(layer_norm(linear(x, w, b), ln_gain, ln_bias))


def dropout_mask(shape, keep: float, rng: np.random.Generator) -> np.ndarray:
    """Inverted-dropout mask: ``1/keep`` with probability ``keep``, else 0."""
    if not 0.0 < keep <= 1.0:
        raise ValueError(f"keep probability must be in (0, 1], got {keep}")
    if keep == 1.0:
        return np.ones(shape)
    return (rng.random(shape) < keep) / keep
