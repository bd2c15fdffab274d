"""Adam with global-norm gradient clipping, plus finite-difference checking."""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from . import kernels
from .autograd import Tensor


class NonFiniteGradient(FloatingPointError):
    pass


def global_norm(grads: Sequence[np.ndarray]) -> float:
    total = 0.0
    for g in grads:
        total += float(np.sum(g.astype(np.float64) ** 2))
    return float(np.sqrt(total))


class Adam:
    def __init__(
        self,
        params: Sequence[Tensor],
        lr: float = 1e-4,
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
        clip_norm: float | None = 1.0,
    ):
        self.params = list(params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.clip_norm = clip_norm
        self.step_count = 0
        # moments accumulate in f64 regardless of parameter dtype
        self.m = [np.zeros(p.data.shape, dtype=np.float64) for p in self.params]
        self.v = [np.zeros(p.data.shape, dtype=np.float64) for p in self.params]

    def step(self) -> float:
        """Apply one update from the accumulated grads; returns the pre-clip norm."""
        grads = []
        for p in self.params:
            g = p.grad if p.grad is not None else np.zeros_like(p.data)
            if not np.all(np.isfinite(g)):
                raise NonFiniteGradient("non-finite gradient encountered")
            grads.append(np.asarray(g, dtype=np.float64))
        norm = global_norm(grads)
        if self.clip_norm is not None and norm > self.clip_norm and norm > 0:
            scale = self.clip_norm / norm
            grads = [g * scale for g in grads]
        self.step_count += 1
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            if p.data.dtype == np.float64:
                kernels.adam_update(
                    p.data, g, m, v, self.step_count, self.lr, self.beta1, self.beta2, self.eps
                )
            else:
                work = p.data.astype(np.float64)
                kernels.adam_update(
                    work, g, m, v, self.step_count, self.lr, self.beta1, self.beta2, self.eps
                )
                p.data[...] = work.astype(p.data.dtype)
        return norm

    def state_arrays(self) -> dict[str, np.ndarray]:
        out: dict[str, np.ndarray] = {"adam/step": np.array([self.step_count], dtype=np.float64)}
        for idx, (m, v) in enumerate(zip(self.m, self.v)):
            out[f"adam/m{idx}"] = m
            out[f"adam/v{idx}"] = v
        return out

    def load_state_arrays(self, arrays: dict[str, np.ndarray]) -> None:
        self.step_count = int(arrays["adam/step"][0])
        for idx in range(len(self.params)):
            self.m[idx][...] = arrays[f"adam/m{idx}"]
            self.v[idx][...] = arrays[f"adam/v{idx}"]


def gradient_check(
    loss_fn: Callable[[], Tensor],
    params: Sequence[Tensor],
    eps: float = 1e-5,
) -> float:
    """Max relative error between tape gradients and central differences.

    loss_fn must rebuild the graph on every call (deterministically); intended
    for small f64 networks in tests.
    """
    from . import autograd as ag

    ag.zero_grads(params)
    loss = loss_fn()
    ag.backward(loss)
    analytic = [np.array(p.grad, dtype=np.float64) if p.grad is not None else np.zeros_like(p.data) for p in params]

    worst = 0.0
    for p, ga in zip(params, analytic):
        flat = p.data.reshape(-1)
        ga_flat = ga.reshape(-1)
        for i in range(flat.size):
            original = flat[i]
            flat[i] = original + eps
            hi = float(loss_fn().data)
            flat[i] = original - eps
            lo = float(loss_fn().data)
            flat[i] = original
            numeric = (hi - lo) / (2 * eps)
            denom = max(abs(numeric), abs(ga_flat[i]), 1e-8)
            worst = max(worst, abs(numeric - ga_flat[i]) / denom)
    return worst
