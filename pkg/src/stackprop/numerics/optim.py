"""Unit-norm gradients feeding ADAM, plus parameter moving averages."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Mapping

import numpy as np

from .autodiff import Parameter


@dataclass
class OptimizerConfig:
    beta1: float = 0.9
    beta2: float = 0.9
    epsilon: float = 1e-4
    learning_rate: float = 1e-3
    ema_decay: float = 0.999
    dropout_keep: float = 0.8
    seed: int = 1
    # "global": one norm over all gradients; "per_parameter": each gradient on its own
    grad_norm_scope: str = "global"

    def __post_init__(self):
        if not (0.0 < self.beta1 < 1.0 and 0.0 < self.beta2 < 1.0):
            raise ValueError("beta1 and beta2 must lie in (0, 1)")
        if self.epsilon <= 0.0:
            raise ValueError("epsilon must be positive")
        if not 0.0 < self.dropout_keep <= 1.0:
            raise ValueError("dropout_keep must lie in (0, 1]")
        if self.grad_norm_scope not in ("global", "per_parameter"):
            raise ValueError(f"unknown grad_norm_scope {self.grad_norm_scope!r}")


def normalize_gradients(grads: list[np.ndarray], scope: str = "global") -> list[np.ndarray]:
    if scope == "per_parameter":
        out = []
        for g in grads:
            norm = np.sqrt(np.sum(g * g))
            out.append(g / norm if norm > 0 else g)
        return out
    norm = np.sqrt(sum(float(np.sum(g * g)) for g in grads))
    if norm == 0.0:
        return grads
    return [g / norm for g in grads]


def unit_norm_then_adam(
    params: Iterable[Parameter],
    config: OptimizerConfig,
    step: int,
    grads: Mapping[str, np.ndarray] | None = None,
) -> None:
    """Rescale gradients to unit L2 norm, then take one bias-corrected ADAM step.

    ``step`` is 1-based. Gradients come from ``Parameter.grad`` unless a
    ``grads`` mapping (name -> array) is passed, as asynchronous workers do.
    Parameter gradients are zeroed afterwards.
    """
    params = list(params)
    if grads is None:
        raw = [p.grad for p in params]
    else:
        raw = [grads.get(p.name, np.zeros_like(p.value)) for p in params]
    normed = normalize_gradients(raw, config.grad_norm_scope)
    b1, b2, lr, eps = config.beta1, config.beta2, config.learning_rate, config.epsilon
    corr1 = 1.0 - b1 ** step
    corr2 = 1.0 - b2 ** step
    for p, g in zip(params, normed):
        # parameters the loss never reached keep their value and moments
        if g.any():
            p.adam_m *= b1
            p.adam_m += (1.0 - b1) * g
            p.adam_v *= b2
            p.adam_v += (1.0 - b2) * g * g
            p.value -= lr * (p.adam_m / corr1) / (np.sqrt(p.adam_v / corr2) + eps)
        p.zero_grad()


def ema_update(params: Iterable[Parameter], decay: float) -> None:
    """``ema <- decay * ema + (1 - decay) * value`` for every parameter."""
    if not 0.0 < decay < 1.0:
        raise ValueError("decay must lie in (0, 1)")
    for p in params:
        p.ema *= decay
        p.ema += (1.0 - decay) * p.value


def warmup_decay(decay: float, num_updates: int) -> float:
    """Moving-average decay capped at ``(1 + t) / (10 + t)`` so early averages track the weights."""
    return min(decay, (1.0 + num_updates) / (10.0 + num_updates))
