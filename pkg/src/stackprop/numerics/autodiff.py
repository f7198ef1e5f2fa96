"""Tape-based reverse-mode differentiation over numpy arrays.

A :class:`Tape` records every primitive executed on tensors that depend on a
parameter. :func:`backward` replays the record in reverse and accumulates the
adjoints into :attr:`Parameter.grad`. Ops whose inputs are all constants are
evaluated eagerly and never recorded, so a tape created with ``record=False``
doubles as an inference context.
"""

from __future__ import annotations

import os
from typing import Callable, Sequence

import numpy as np

DTYPE = np.float64
LN_EPS = 1e-6

# Enabled under the test suite; checks every op output for NaN/inf (masked logits excepted).
CHECK_FINITE = os.environ.get("STACKPROP_CHECK_FINITE", "0") == "1"


class Parameter:
    """A named trainable array with its gradient, ADAM slots and moving average."""

    __slots__ = ("name", "value", "grad", "adam_m", "adam_v", "ema")

    def __init__(self, name: str, value: np.ndarray):
        value = np.array(value, dtype=DTYPE)
        self.name = name
        self.value = value
        self.grad = np.zeros_like(value)
        self.adam_m = np.zeros_like(value)
        self.adam_v = np.zeros_like(value)
        self.ema = value.copy()

    @property
    def shape(self) -> tuple[int, ...]:
        return self.value.shape

    def zero_grad(self) -> None:
        self.grad.fill(0.0)

    def __repr__(self) -> str:
        return f"Parameter({self.name!r}, shape={self.shape})"


class Tensor:
    __slots__ = ("value", "grad", "tape", "requires_grad")

    def __init__(self, value: np.ndarray, tape: Tape, requires_grad: bool = False):
        self.value = value
        self.grad = None
        self.tape = tape
        self.requires_grad = requires_grad

    @property
    def shape(self) -> tuple[int, ...]:
        return self.value.shape

    def __len__(self) -> int:
        return len(self.value)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    def __add__(self, other):
        return add(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __getitem__(self, index):
        return row(self, index)


class Tape:
    """Ordered record of primitive ops, single use, confined to one thread.

    ``use_ema`` makes :meth:`param` read the moving average instead of the
    raw value; that is the inference view of a model.
    """

    def __init__(self, record: bool = True, use_ema: bool = False):
        self.record = record
        self.use_ema = use_ema
        self.nodes: list[tuple[tuple, tuple, Callable]] = []
        self.leaves: dict[int, tuple[Parameter, Tensor]] = {}
        self._done = False

    def param(self, p: Parameter) -> Tensor:
        hit = self.leaves.get(id(p))
        if hit is not None:
            return hit[1]
        t = Tensor(p.ema if self.use_ema else p.value, self, requires_grad=self.record)
        self.leaves[id(p)] = (p, t)
        return t

    def constant(self, value) -> Tensor:
        return Tensor(np.asarray(value, dtype=DTYPE), self)

    def __len__(self) -> int:
        return len(self.nodes)


def _check(value: np.ndarray, allow_neg_inf: bool = False) -> None:
    if allow_neg_inf:
        bad = np.isnan(value) | (value == np.inf)
    else:
        bad = ~np.isfinite(value)
    if bad.any():
        raise FloatingPointError("non-finite value produced")


def _emit(inputs: Sequence[Tensor], values, backward_fn: Callable, allow_neg_inf: bool = False):
    """Wrap op outputs as tensors and record the op when any input needs a gradient."""
    tape = inputs[0].tape
    multi = isinstance(values, tuple)
    vals = values if multi else (values,)
    if CHECK_FINITE:
        for v in vals:
            _check(v, allow_neg_inf)
    needs = tape.record and any(t.requires_grad for t in inputs)
    outs = tuple(Tensor(v, tape, needs) for v in vals)
    if needs:
        tape.nodes.append((tuple(inputs), outs, backward_fn))
    return outs if multi else outs[0]


def _as_tensor(x, tape: Tape) -> Tensor:
    return x if isinstance(x, Tensor) else tape.constant(x)


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, extent in enumerate(shape):
        if extent == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


# ---------------------------------------------------------------- elementwise

def add(a: Tensor, b) -> Tensor:
    b = _as_tensor(b, a.tape)
    sa, sb = a.shape, b.shape
    return _emit((a, b), a.value + b.value,
                 lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)))


def sub(a: Tensor, b) -> Tensor:
    b = _as_tensor(b, a.tape)
    sa, sb = a.shape, b.shape
    return _emit((a, b), a.value - b.value,
                 lambda g: (_unbroadcast(g, sa), -_unbroadcast(g, sb)))


def mul(a: Tensor, b) -> Tensor:
    b = _as_tensor(b, a.tape)
    av, bv = a.value, b.value
    return _emit((a, b), av * bv,
                 lambda g: (_unbroadcast(g * bv, av.shape), _unbroadcast(g * av, bv.shape)))


def scale(a: Tensor, c: float) -> Tensor:
    return _emit((a,), a.value * c, lambda g: (g * c,))


def sigmoid(a: Tensor) -> Tensor:
    y = 0.5 * (1.0 + np.tanh(0.5 * a.value))
    return _emit((a,), y, lambda g: (g * y * (1.0 - y),))


def tanh(a: Tensor) -> Tensor:
    y = np.tanh(a.value)
    return _emit((a,), y, lambda g: (g * (1.0 - y * y),))


def relu(a: Tensor) -> Tensor:
    on = a.value > 0
    return _emit((a,), np.where(on, a.value, 0.0), lambda g: (g * on,))


def mask_illegal(a: Tensor, legal: np.ndarray) -> Tensor:
    """Replace entries where ``legal`` is False by -inf; their gradient is dropped."""
    legal = np.asarray(legal, dtype=bool)
    return _emit((a,), np.where(legal, a.value, -np.inf), lambda g: (g * legal,),
                 allow_neg_inf=True)


def square(a: Tensor) -> Tensor:
    x = a.value
    return _emit((a,), x * x, lambda g: (2.0 * g * x,))


def total(a: Tensor) -> Tensor:
    shape = a.shape
    return _emit((a,), np.asarray(a.value.sum()), lambda g: (np.broadcast_to(g, shape),))


# ---------------------------------------------------------------- structural
# These only move values around, so masked -inf logits may pass through.

def row(a: Tensor, index) -> Tensor:
    """``a[index]`` for an int, slice or integer array index along axis 0."""
    shape = a.shape

    def bwd(g):
        ga = np.zeros(shape, dtype=DTYPE)
        if isinstance(index, (int, np.integer, slice)):
            ga[index] += g
        else:
            np.add.at(ga, index, g)
        return (ga,)

    return _emit((a,), a.value[index], bwd, allow_neg_inf=True)


def concat(parts: Sequence[Tensor], axis: int = 0) -> Tensor:
    sizes = np.cumsum([p.shape[axis] for p in parts])[:-1]
    return _emit(tuple(parts), np.concatenate([p.value for p in parts], axis=axis),
                 lambda g: tuple(np.split(g, sizes, axis=axis)), allow_neg_inf=True)


def stack(parts: Sequence[Tensor]) -> Tensor:
    return _emit(tuple(parts), np.stack([p.value for p in parts]),
                 lambda g: tuple(g), allow_neg_inf=True)


def unstack(a: Tensor) -> tuple[Tensor, ...]:
    """Split along axis 0 into one tensor per row (a single recorded node)."""
    shape = a.shape

    def bwd(*gs):
        out = np.zeros(shape, dtype=DTYPE)
        for i, g in enumerate(gs):
            if g is not None:
                out[i] = g
        return (out,)

    return _emit((a,), tuple(a.value), bwd, allow_neg_inf=True)


def reshape(a: Tensor, shape) -> Tensor:
    old = a.shape
    return _emit((a,), a.value.reshape(shape), lambda g: (g.reshape(old),), allow_neg_inf=True)


# ---------------------------------------------------------------- linear algebra

def matmul(a: Tensor, b: Tensor) -> Tensor:
    av, bv = a.value, b.value

    def bwd(g):
        if av.ndim == 1 and bv.ndim == 1:
            return g * bv, g * av
        if av.ndim == 1:
            return g @ bv.T, np.outer(av, g)
        if bv.ndim == 1:
            return np.outer(g, bv), av.T @ g
        return g @ bv.T, av.T @ g

    return _emit((a, b), av @ bv, bwd)


def linear(x: Tensor, w: Tensor, b: Tensor | None = None) -> Tensor:
    """``x @ w.T + b`` for a vector or a row-stacked batch ``x``; ``w`` is (out, in)."""
    xv, wv = x.value, w.value
    y = xv @ wv.T
    if b is None:
        def bwd(g):
            gw = np.outer(g, xv) if xv.ndim == 1 else g.T @ xv
            return g @ wv, gw
        return _emit((x, w), y, bwd)
    y = y + b.value

    def bwd_b(g):
        if xv.ndim == 1:
            return g @ wv, np.outer(g, xv), g
        return g @ wv, g.T @ xv, g.sum(axis=0)

    return _emit((x, w, b), y, bwd_b)


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = LN_EPS) -> Tensor:
    """Normalize over the last axis to zero mean / unit variance, then scale and shift."""
    xv, gv = x.value, gain.value
    mu = xv.mean(axis=-1, keepdims=True)
    xc = xv - mu
    inv = 1.0 / np.sqrt((xc * xc).mean(axis=-1, keepdims=True) + eps)
    xhat = xc * inv
    d = xv.shape[-1]

    def bwd(g):
        gxhat = g * gv
        gx = inv * (gxhat - gxhat.mean(axis=-1, keepdims=True)
                    - xhat * (gxhat * xhat).mean(axis=-1, keepdims=True))
        if xv.ndim == 1:
            return gx, g * xhat, g
        return gx, (g * xhat).reshape(-1, d).sum(axis=0), g.reshape(-1, d).sum(axis=0)

    return _emit((x, gain, bias), xhat * gv + bias.value, bwd)


# ---------------------------------------------------------------- fused cells

def lstm_pointwise(gates: Tensor, c_prev: Tensor) -> tuple[Tensor, Tensor]:
    """Gate nonlinearities of an LSTM step; ``gates`` is laid out as [i, f, o, g]."""
    gv = gates.value
    hd = gv.shape[-1] // 4
    ifo = 0.5 * (1.0 + np.tanh(0.5 * gv[: 3 * hd]))
    i, f, o = ifo[:hd], ifo[hd: 2 * hd], ifo[2 * hd:]
    cand = np.tanh(gv[3 * hd:])
    cp = c_prev.value
    c = f * cp + i * cand
    tc = np.tanh(c)
    h = o * tc

    def bwd(gh, gc):
        if gh is None:
            gh = np.zeros(hd)
        dc = gh * o * (1.0 - tc * tc)
        if gc is not None:
            dc = dc + gc
        dgates = np.empty_like(gv)
        dgates[:hd] = dc * cand * i * (1.0 - i)
        dgates[hd: 2 * hd] = dc * cp * f * (1.0 - f)
        dgates[2 * hd: 3 * hd] = gh * tc * o * (1.0 - o)
        dgates[3 * hd:] = dc * i * (1.0 - cand * cand)
        return dgates, dc * f

    return _emit((gates, c_prev), (h, c), bwd)


def logsumexp(v: np.ndarray, axis: int = -1) -> np.ndarray:
    m = np.max(v, axis=axis, keepdims=True)
    return (m + np.log(np.exp(v - m).sum(axis=axis, keepdims=True))).squeeze(axis)


def softmax_with_logz(logits) -> tuple[np.ndarray, float | np.ndarray]:
    """Max-shifted softmax and the log partition ``log sum exp(logits)``."""
    v = np.asarray(logits.value if isinstance(logits, Tensor) else logits, dtype=DTYPE)
    m = np.max(v, axis=-1, keepdims=True)
    e = np.exp(v - m)
    s = e.sum(axis=-1, keepdims=True)
    log_z = (m + np.log(s)).squeeze(-1)
    return e / s, (float(log_z) if v.ndim == 1 else log_z)


def self_normalized_nll(logits: Tensor, gold: Sequence[int], alpha: float) -> tuple[Tensor, np.ndarray]:
    """Summed ``-(logit[gold] - log_z) + alpha * log_z**2`` over the rows of ``logits``.

    Rows may carry ``-inf`` entries for masked actions. Returns the scalar loss
    tensor and the per-row log partition values.
    """
    v = logits.value
    two_d = v.ndim == 2
    if not two_d:
        v = v[None, :]
    gold = np.asarray(gold, dtype=np.int64).reshape(-1)
    rows = np.arange(len(gold))
    gold_logit = v[rows, gold]
    if not np.all(np.isfinite(gold_logit)):
        raise ValueError("gold action is masked as illegal")
    probs, log_z = softmax_with_logz(v)
    loss = float(np.sum(log_z - gold_logit + alpha * log_z * log_z))

    def bwd(g):
        d = probs * (1.0 + 2.0 * alpha * log_z)[:, None]
        d[rows, gold] -= 1.0
        d *= g
        return (d if two_d else d[0],)

    return _emit((logits,), np.asarray(loss), bwd), log_z


# ---------------------------------------------------------------- reverse pass

def backward(tape: Tape, loss: Tensor, accumulate: bool = True) -> dict[str, np.ndarray]:
    """Propagate d(loss)/d(.) back through ``tape``.

    Adds each reached parameter's gradient into ``Parameter.grad`` when
    ``accumulate`` is set, and returns the per-parameter gradients of this tape.
    """
    if loss.tape is not tape or loss.value.size != 1:
        raise ValueError("loss must be a scalar tensor recorded on this tape")
    if tape._done:
        raise RuntimeError("tape has already been replayed")
    if not loss.requires_grad:
        return {}
    tape._done = True
    loss.grad = np.ones_like(loss.value)
    for inputs, outputs, fn in reversed(tape.nodes):
        grads = [o.grad for o in outputs]
        if all(g is None for g in grads):
            continue
        in_grads = fn(*grads)
        for t, g in zip(inputs, in_grads):
            if g is None or not t.requires_grad:
                continue
            if t.grad is None:
                t.grad = np.array(g, dtype=DTYPE, copy=True).reshape(t.shape)
            else:
                t.grad += g
    out = {}
    for p, leaf in tape.leaves.values():
        if leaf.grad is None:
            continue
        out[p.name] = leaf.grad
        if accumulate:
            p.grad += leaf.grad
    tape.nodes.clear()
    return out
