"""Prioritized replay over dialog transitions.

Priorities follow the loss-adjusted scheme: stored priority is
max(|td-error|, 1)^alpha, sampled proportionally through a sum tree, with
importance weights (N * P(i))^-beta normalized by the batch maximum.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..nn import kernels


class BufferTooSmall(ValueError):
    pass


@dataclass
class Transition:
    obs: np.ndarray
    candidates: np.ndarray
    chosen: int
    reward: float
    next_obs: np.ndarray
    next_candidates: np.ndarray
    done: bool
    mode_label: float


class SumTree:
    def __init__(self, capacity: int):
        size = 1
        while size < capacity:
            size *= 2
        self.size = size
        self.tree = np.zeros(2 * size - 1, dtype=np.float64)

    def set(self, leaf: int, value: float) -> None:
        kernels.sumtree_set(self.tree, self.size, leaf, value)

    def get(self, leaf: int) -> float:
        return float(self.tree[leaf + self.size - 1])

    def total(self) -> float:
        return float(self.tree[0])

    def sample(self, targets: np.ndarray) -> np.ndarray:
        return kernels.sumtree_sample(self.tree, self.size, targets)


class ReplayBuffer:
    def __init__(self, capacity: int, alpha: float = 0.6):
        if capacity < 1:
            raise ValueError("capacity must be positive")
        self.capacity = capacity
        self.alpha = alpha
        self.storage: list[Transition | None] = [None] * capacity
        self.tree = SumTree(capacity)
        self.write = 0
        self.count = 0
        self.max_priority = 1.0  # stored scale: max(|delta|, 1)^alpha >= 1

    def __len__(self) -> int:
        return self.count

    def priority_of(self, delta: float) -> float:
        return max(abs(delta), 1.0) ** self.alpha

    def add(self, transition: Transition) -> int:
        index = self.write
        self.storage[index] = transition
        self.tree.set(index, self.max_priority)
        self.write = (self.write + 1) % self.capacity
        self.count = min(self.count + 1, self.capacity)
        return index

    def sample(
        self, batch_size: int, beta: float, rng: np.random.Generator
    ) -> tuple[list[Transition], np.ndarray, np.ndarray]:
        if self.count < batch_size:
            raise BufferTooSmall(f"buffer holds {self.count} < batch {batch_size}")
        total = self.tree.total()
        targets = rng.uniform(0.0, total, size=batch_size)
        indices = self.tree.sample(targets)
        # ring slots beyond count are zero-priority and never drawn
        probs = np.array([self.tree.get(int(i)) for i in indices]) / total
        weights = (self.count * probs) ** (-beta)
        weights /= weights.max()
        batch = [self.storage[int(i)] for i in indices]
        return batch, indices, weights

    def update_priorities(self, indices: np.ndarray, deltas: np.ndarray) -> None:
        for index, delta in zip(indices, deltas):
            value = self.priority_of(float(delta))
            self.tree.set(int(index), value)
            self.max_priority = max(self.max_priority, value)
