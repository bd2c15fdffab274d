"""Reverse-mode tape over numpy arrays, sized for small feed-forward stacks.

Only the handful of operations the agent network needs. Gradients flow only
into tensors whose subgraph contains a parameter, so feeding large constant
batches is cheap. `no_grad()` turns the tape off entirely for action
selection and evaluation.
"""

from __future__ import annotations

from contextlib import contextmanager
from typing import Callable

import numpy as np

from . import kernels

_grad_enabled = True


@contextmanager
def no_grad():
    global _grad_enabled
    previous = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = previous


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "parents", "backward_fn")

    def __init__(
        self,
        data: np.ndarray,
        requires_grad: bool = False,
        parents: tuple["Tensor", ...] = (),
        backward_fn: Callable[[np.ndarray], tuple] | None = None,
    ):
        self.data = data
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self.parents = parents
        self.backward_fn = backward_fn

    @property
    def shape(self):
        return self.data.shape

    def __repr__(self) -> str:
        return f"Tensor(shape={self.data.shape}, grad={self.requires_grad})"


def parameter(data: np.ndarray) -> Tensor:
    return Tensor(np.asarray(data), requires_grad=True)


def constant(data: np.ndarray) -> Tensor:
    return Tensor(np.asarray(data))


def _make(data, parents, backward_fn) -> Tensor:
    if _grad_enabled and any(p.requires_grad for p in parents):
        return Tensor(data, requires_grad=True, parents=parents, backward_fn=backward_fn)
    return Tensor(data)


def linear(x: Tensor, weight: Tensor, bias: Tensor) -> Tensor:
    out = x.data @ weight.data + bias.data

    def backward(grad):
        gx = grad @ weight.data.T if x.requires_grad else None
        gw = x.data.T @ grad if weight.requires_grad else None
        gb = grad.sum(axis=0) if bias.requires_grad else None
        return gx, gw, gb

    return _make(out, (x, weight, bias), backward)


def selu(x: Tensor) -> Tensor:
    out = kernels.selu_forward(x.data)

    def backward(grad):
        return (kernels.selu_backward(x.data, grad) if x.requires_grad else None,)

    return _make(out, (x,), backward)


def dropout(x: Tensor, rate: float, rng: np.random.Generator | None, train: bool) -> Tensor:
    """Inverted dropout: surviving units are scaled by 1/(1-rate) at train time."""
    if not train or rate <= 0.0:
        return x
    if rng is None:
        raise ValueError("dropout in train mode needs an rng stream")
    mask = ((rng.random(x.data.shape) >= rate) / (1.0 - rate)).astype(x.data.dtype)
    out = x.data * mask

    def backward(grad):
        return (grad * mask if x.requires_grad else None,)

    return _make(out, (x,), backward)


def concat_cols(a: Tensor, b: Tensor) -> Tensor:
    out = np.concatenate([a.data, b.data], axis=1)
    split = a.data.shape[1]

    def backward(grad):
        ga = grad[:, :split] if a.requires_grad else None
        gb = grad[:, split:] if b.requires_grad else None
        return ga, gb

    return _make(out, (a, b), backward)


def gather_rows(x: Tensor, index: np.ndarray) -> Tensor:
    out = x.data[index]

    def backward(grad):
        if not x.requires_grad:
            return (None,)
        gx = np.zeros_like(x.data)
        np.add.at(gx, index, grad)
        return (gx,)

    return _make(out, (x,), backward)


def segment_center(x: Tensor, segments: np.ndarray, n_segments: int) -> Tensor:
    """Subtract each segment's mean from its rows (the dueling aggregation).

    The centering map is symmetric and idempotent, so the backward pass is the
    same centering applied to the incoming gradient.
    """
    counts = np.bincount(segments, minlength=n_segments).astype(x.data.dtype)
    counts = np.maximum(counts, 1.0)[:, None]

    def center(values: np.ndarray) -> np.ndarray:
        sums = np.zeros((n_segments, values.shape[1]), dtype=values.dtype)
        np.add.at(sums, segments, values)
        return values - (sums / counts)[segments]

    out = center(x.data)

    def backward(grad):
        return (center(grad) if x.requires_grad else None,)

    return _make(out, (x,), backward)


def add(a: Tensor, b: Tensor) -> Tensor:
    out = a.data + b.data

    def backward(grad):
        return (grad if a.requires_grad else None, grad if b.requires_grad else None)

    return _make(out, (a, b), backward)


def huber_loss_mean(pred: Tensor, target: np.ndarray, weights: np.ndarray, threshold: float = 1.0) -> Tensor:
    """Importance-weighted mean Huber loss; target and weights are constants."""
    delta = pred.data - target
    values = kernels.huber(delta, threshold)
    out = np.array(float((values * weights).mean()))

    def backward(grad):
        if not pred.requires_grad:
            return (None,)
        g = kernels.huber_grad(delta, threshold) * weights / delta.size
        return (g * float(grad),)

    return _make(out, (pred,), backward)


def bce_logits_mean(logits: Tensor, labels: np.ndarray) -> Tensor:
    """Mean binary cross-entropy on logits (numerically stable form)."""
    z = logits.data
    values = np.maximum(z, 0) - z * labels + np.log1p(np.exp(-np.abs(z)))
    out = np.array(float(values.mean()))

    def backward(grad):
        if not logits.requires_grad:
            return (None,)
        sig = 1.0 / (1.0 + np.exp(-z))
        return ((sig - labels) / z.size * float(grad),)

    return _make(out, (logits,), backward)


def add_scaled(a: Tensor, b: Tensor, coeff: float) -> Tensor:
    out = a.data + coeff * b.data

    def backward(grad):
        ga = grad if a.requires_grad else None
        gb = grad * coeff if b.requires_grad else None
        return ga, gb

    return _make(out, (a, b), backward)


def backward(loss: Tensor) -> None:
    """Accumulate gradients of a scalar loss into every requiring tensor."""
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(loss, False)]
    while stack:
        node, processed = stack.pop()
        if processed:
            order.append(node)
            continue
        if id(node) in seen or not node.requires_grad:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent in node.parents:
            stack.append((parent, False))

    loss.grad = np.ones_like(loss.data)
    for node in reversed(order):
        if node.backward_fn is None or node.grad is None:
            continue
        grads = node.backward_fn(node.grad)
        for parent, grad in zip(node.parents, grads):
            if grad is None or not parent.requires_grad:
                continue
            if parent.grad is None:
                parent.grad = grad
            else:
                parent.grad = parent.grad + grad


def zero_grads(tensors) -> None:
    for t in tensors:
        t.grad = None
