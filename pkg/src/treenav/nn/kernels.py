"""Hot elementwise kernels with numba-jitted and pure-numpy implementations.

The numpy path is selected by setting TREENAV_DISABLE_NUMBA=1 (or when numba
is not importable). Matrix products are deliberately left to numpy/BLAS in
either mode. Each backend is deterministic run-to-run; bitwise equality
*across* backends is not guaranteed (libm/reduction-order differences).
"""

from __future__ import annotations

import math
import os

import numpy as np

# standard self-normalizing activation constants
SELU_LAMBDA = 1.0507009873554805
SELU_ALPHA = 1.6732632423543772

_DISABLED = os.environ.get("TREENAV_DISABLE_NUMBA", "") not in ("", "0")

try:
    if _DISABLED:
        raise ImportError("numba disabled by TREENAV_DISABLE_NUMBA")
    from numba import njit

    HAS_NUMBA = True
except ImportError:
    HAS_NUMBA = False


def backend_name() -> str:
    return "numba" if HAS_NUMBA else "numpy"


# -- numpy implementations ---------------------------------------------------


def selu_forward_np(x: np.ndarray) -> np.ndarray:
    return SELU_LAMBDA * np.where(x > 0, x, SELU_ALPHA * np.expm1(x))


def selu_backward_np(x: np.ndarray, grad: np.ndarray) -> np.ndarray:
    return grad * (SELU_LAMBDA * np.where(x > 0, 1.0, SELU_ALPHA * np.exp(x)))


def adam_update_np(
    param: np.ndarray,
    grad: np.ndarray,
    m: np.ndarray,
    v: np.ndarray,
    step: int,
    lr: float,
    beta1: float,
    beta2: float,
    eps: float,
) -> None:
    m *= beta1
    m += (1.0 - beta1) * grad
    v *= beta2
    v += (1.0 - beta2) * grad * grad
    m_hat = m / (1.0 - beta1**step)
    v_hat = v / (1.0 - beta2**step)
    param -= lr * m_hat / (np.sqrt(v_hat) + eps)


def huber_np(delta: np.ndarray, threshold: float) -> np.ndarray:
    a = np.abs(delta)
    return np.where(a <= threshold, 0.5 * delta * delta, threshold * (a - 0.5 * threshold))


def huber_grad_np(delta: np.ndarray, threshold: float) -> np.ndarray:
    return np.clip(delta, -threshold, threshold)


def sumtree_sample_np(tree: np.ndarray, size: int, targets: np.ndarray) -> np.ndarray:
    """Descend a binary sum-tree (flat array, leaves in [size-1, 2*size-1))."""
    out = np.empty(len(targets), dtype=np.int64)
    for k in range(len(targets)):
        remaining = targets[k]
        idx = 0
        while idx < size - 1:
            left = 2 * idx + 1
            if remaining <= tree[left]:
                idx = left
            else:
                remaining -= tree[left]
                idx = left + 1
        out[k] = idx - (size - 1)
    return out


def sumtree_set_np(tree: np.ndarray, size: int, leaf: int, value: float) -> None:
    idx = leaf + size - 1
    delta = value - tree[idx]
    tree[idx] = value
    while idx > 0:
        idx = (idx - 1) // 2
        tree[idx] += delta


# -- numba implementations ---------------------------------------------------

if HAS_NUMBA:

    @njit(cache=True)
    def _selu_forward_nb(flat: np.ndarray, out: np.ndarray) -> None:
        for i in range(flat.shape[0]):
            x = flat[i]
            if x > 0:
                out[i] = SELU_LAMBDA * x
            else:
                out[i] = SELU_LAMBDA * SELU_ALPHA * (np.expm1(x))

    @njit(cache=True)
    def _selu_backward_nb(flat: np.ndarray, grad: np.ndarray, out: np.ndarray) -> None:
        for i in range(flat.shape[0]):
            x = flat[i]
            if x > 0:
                out[i] = grad[i] * SELU_LAMBDA
            else:
                out[i] = grad[i] * SELU_LAMBDA * SELU_ALPHA * np.exp(x)

    @njit(cache=True)
    def _adam_update_nb(
        param: np.ndarray,
        grad: np.ndarray,
        m: np.ndarray,
        v: np.ndarray,
        step: int,
        lr: float,
        beta1: float,
        beta2: float,
        eps: float,
    ) -> None:
        c1 = 1.0 - beta1**step
        c2 = 1.0 - beta2**step
        for i in range(param.shape[0]):
            g = grad[i]
            m[i] = beta1 * m[i] + (1.0 - beta1) * g
            v[i] = beta2 * v[i] + (1.0 - beta2) * g * g
            param[i] -= lr * (m[i] / c1) / (np.sqrt(v[i] / c2) + eps)

    @njit(cache=True)
    def _huber_nb(delta: np.ndarray, threshold: float, out: np.ndarray) -> None:
        for i in range(delta.shape[0]):
            a = abs(delta[i])
            if a <= threshold:
                out[i] = 0.5 * delta[i] * delta[i]
            else:
                out[i] = threshold * (a - 0.5 * threshold)

    @njit(cache=True)
    def _huber_grad_nb(delta: np.ndarray, threshold: float, out: np.ndarray) -> None:
        for i in range(delta.shape[0]):
            d = delta[i]
            if d > threshold:
                out[i] = threshold
            elif d < -threshold:
                out[i] = -threshold
            else:
                out[i] = d

    @njit(cache=True)
    def _sumtree_sample_nb(
        tree: np.ndarray, size: int, targets: np.ndarray, out: np.ndarray
    ) -> None:
        for k in range(targets.shape[0]):
            remaining = targets[k]
            idx = 0
            while idx < size - 1:
                left = 2 * idx + 1
                if remaining <= tree[left]:
                    idx = left
                else:
                    remaining -= tree[left]
                    idx = left + 1
            out[k] = idx - (size - 1)

    @njit(cache=True)
    def _sumtree_set_nb(tree: np.ndarray, size: int, leaf: int, value: float) -> None:
        idx = leaf + size - 1
        delta = value - tree[idx]
        tree[idx] = value
        while idx > 0:
            idx = (idx - 1) // 2
            tree[idx] += delta


# -- dispatching wrappers ------------------------------------------------------


def selu_forward(x: np.ndarray) -> np.ndarray:
    if HAS_NUMBA:
        out = np.empty_like(x)
        _selu_forward_nb(np.ascontiguousarray(x).ravel(), out.ravel())
        return out
    return selu_forward_np(x)


def selu_backward(x: np.ndarray, grad: np.ndarray) -> np.ndarray:
    if HAS_NUMBA:
        out = np.empty_like(x)
        _selu_backward_nb(
            np.ascontiguousarray(x).ravel(), np.ascontiguousarray(grad).ravel(), out.ravel()
        )
        return out
    return selu_backward_np(x, grad)


def adam_update(param, grad, m, v, step, lr, beta1, beta2, eps) -> None:
    if HAS_NUMBA:
        _adam_update_nb(
            param.ravel(), np.ascontiguousarray(grad).ravel(), m.ravel(), v.ravel(),
            step, lr, beta1, beta2, eps,
        )
    else:
        adam_update_np(param, grad, m, v, step, lr, beta1, beta2, eps)


def huber(delta: np.ndarray, threshold: float) -> np.ndarray:
    if HAS_NUMBA:
        out = np.empty_like(delta)
        _huber_nb(np.ascontiguousarray(delta).ravel(), threshold, out.ravel())
        return out
    return huber_np(delta, threshold)


def huber_grad(delta: np.ndarray, threshold: float) -> np.ndarray:
    if HAS_NUMBA:
        out = np.empty_like(delta)
        _huber_grad_nb(np.ascontiguousarray(delta).ravel(), threshold, out.ravel())
        return out
    return huber_grad_np(delta, threshold)


def sumtree_sample(tree: np.ndarray, size: int, targets: np.ndarray) -> np.ndarray:
    if HAS_NUMBA:
        out = np.empty(len(targets), dtype=np.int64)
        _sumtree_sample_nb(tree, size, targets, out)
        return out
    return sumtree_sample_np(tree, size, targets)


def sumtree_set(tree: np.ndarray, size: int, leaf: int, value: float) -> None:
    if HAS_NUMBA:
        _sumtree_set_nb(tree, size, leaf, value)
    else:
        sumtree_set_np(tree, size, leaf, value)
