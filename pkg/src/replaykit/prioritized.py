"""Proportional prioritized sampling over buffer slots.

A flat-array sum tree keeps per-slot priorities already raised to the
alpha exponent, so sampling is an O(log n) prefix-sum descent and the
probability of slot i is leaf(i) / total. Importance weights correct
the induced bias and are normalized by the batch maximum so the largest
weight in every batch is exactly 1.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, NotReadyError, NumericalError
from .replay import ReplayBuffer, Transition


class SumTree:
    """Complete binary tree over ``leaf_capacity`` non-negative values.

    Internal nodes store the sum of their children. The leaf count is
    padded up to a power of two so every leaf sits at the same depth
    and the descent visits leaves in index order; padding leaves stay
    at zero and can never be selected.
    """

    def __init__(self, leaf_capacity: int) -> None:
        if not isinstance(leaf_capacity, int) or leaf_capacity < 1:
            raise ConfigurationError(
                f"leaf_capacity must be a positive int, got {leaf_capacity!r}"
            )
        self.leaf_capacity = leaf_capacity
        padded = 1
        while padded < leaf_capacity:
            padded *= 2
        self._padded = padded
        self._nodes = np.zeros(2 * padded - 1)

    @property
    def total(self) -> float:
        """Sum of all leaf values."""
        return float(self._nodes[0])

    @property
    def nodes(self) -> np.ndarray:
        """Read-only view of the heap array: internal sums first (root
        at 0), then the padded leaf row."""
        view = self._nodes.view()
        view.flags.writeable = False
        return view

    def leaf(self, index: int) -> float:
        self._check_index(index)
        return float(self._nodes[self._padded - 1 + index])

    def set(self, index: int, value: float) -> None:
        """Set leaf ``index`` to ``value`` and refresh ancestor sums."""
        self._check_index(index)
        value = float(value)
        if not np.isfinite(value):
            raise NumericalError(f"priority must be finite, got {value!r}")
        if value < 0.0:
            raise ValueError(f"priority must be >= 0, got {value}")
        node = self._padded - 1 + index
        change = value - self._nodes[node]
        self._nodes[node] = value
        while node != 0:
            node = (node - 1) // 2
            self._nodes[node] += change

    def sample(self, u: float) -> int:
        """Leaf index whose prefix-sum interval contains ``u``.

        Returns the unique i with prefix(i) <= u < prefix(i + 1) where
        prefix sums run over leaves in index order.
        """
        total = self.total
        if total <= 0.0:
            raise NotReadyError("cannot sample from a tree with zero total mass")
        if not 0.0 <= u < total:
            raise ValueError(f"u must lie in [0, {total}), got {u}")
        node = 0
        while node < self._padded - 1:
            left = 2 * node + 1
            if u < self._nodes[left]:
                node = left
            else:
                u -= self._nodes[left]
                node = left + 1
        return node - (self._padded - 1)

    def sample_batch(self, us: np.ndarray) -> np.ndarray:
        """Vectorized :meth:`sample` over an array of offsets."""
        total = self.total
        if total <= 0.0:
            raise NotReadyError("cannot sample from a tree with zero total mass")
        us = np.asarray(us, dtype=np.float64).copy()
        if us.size and (us.min() < 0.0 or us.max() >= total):
            raise ValueError("all offsets must lie in [0, total)")
        nodes = np.zeros(us.shape, dtype=np.int64)
        while nodes.size and nodes[0] < self._padded - 1:
            left = 2 * nodes + 1
            go_left = us < self._nodes[left]
            nodes = np.where(go_left, left, left + 1)
            us = np.where(go_left, us, us - self._nodes[left])
        return nodes - (self._padded - 1)

    def rebuild(self) -> None:
        """Recompute every internal sum from the leaves."""
        for node in range(self._padded - 2, -1, -1):
            self._nodes[node] = self._nodes[2 * node + 1] + self._nodes[2 * node + 2]

    def _check_index(self, index: int) -> None:
        if not 0 <= index < self.leaf_capacity:
            raise IndexError(
                f"leaf {index} out of range for capacity {self.leaf_capacity}"
            )


@dataclass(frozen=True)
class PerConfig:
    """Prioritization hyperparameters.

    alpha blends uniform (0) and fully proportional (1) sampling; beta
    sets the importance-weight correction and is held constant over a
    run; epsilon is the additive floor keeping zero-error transitions
    sampleable; max_priority seeds the raw priority of fresh
    transitions before any error estimate exists.
    """

    alpha: float = 0.6
    beta: float = 0.4
    epsilon: float = 0.01
    max_priority: float = 1.0

    def __post_init__(self) -> None:
        if not 0.0 <= self.alpha <= 1.0:
            raise ConfigurationError(f"alpha must be in [0, 1], got {self.alpha}")
        if not 0.0 <= self.beta <= 1.0:
            raise ConfigurationError(f"beta must be in [0, 1], got {self.beta}")
        if not self.epsilon > 0.0:
            raise ConfigurationError(f"epsilon must be > 0, got {self.epsilon}")
        if not self.max_priority > 0.0:
            raise ConfigurationError(
                f"max_priority must be > 0, got {self.max_priority}"
            )


class PrioritizedSampler:
    """Couples a sum tree to buffer slots for proportional replay.

    New transitions are inserted at the largest raw priority seen so
    far, which guarantees each is sampled at least once before its
    priority is refined by an observed TD error.
    """

    def __init__(self, capacity: int, config: PerConfig | None = None) -> None:
        self.config = config or PerConfig()
        self.tree = SumTree(capacity)
        self._max_raw = self.config.max_priority

    def insert(self, index: int) -> None:
        """Register slot ``index`` as freshly written.

        Any priority of an evicted transition previously in the slot is
        fully replaced.
        """
        self.tree.set(index, self._max_raw ** self.config.alpha)

    def update_priorities(self, indices, td_errors) -> None:
        """Refresh priorities from TD errors: raw priority |delta| + epsilon."""
        td_errors = np.asarray(td_errors, dtype=np.float64)
        if not np.all(np.isfinite(td_errors)):
            raise NumericalError("TD errors must be finite")
        if len(indices) != td_errors.size:
            raise ValueError("indices and td_errors must have equal length")
        for index, delta in zip(indices, td_errors.ravel()):
            raw = abs(float(delta)) + self.config.epsilon
            self.tree.set(int(index), raw ** self.config.alpha)
            if raw > self._max_raw:
                self._max_raw = raw

    def sample(
        self, buffer: ReplayBuffer, batch_size: int, rng: np.random.Generator
    ) -> list[tuple[int, Transition, float]]:
        """Stratified proportional draw of ``batch_size`` transitions.

        The total mass is split into batch_size equal segments with one
        uniform draw per segment. Weights are (N * P(i)) ** -beta,
        normalized by the batch maximum.
        """
        if batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {batch_size}")
        if len(buffer) == 0:
            raise NotReadyError("cannot sample from an empty buffer")
        total = self.tree.total
        if total <= 0.0:
            raise NotReadyError("no transition has positive priority")
        segment = total / batch_size
        offsets = (np.arange(batch_size) + rng.random(batch_size)) * segment
        # Guard the upper edge: floating roundup may land exactly on total.
        offsets = np.minimum(offsets, np.nextafter(total, 0.0))
        indices = self.tree.sample_batch(offsets)
        n = len(buffer)
        probs = np.array([self.tree.leaf(int(i)) for i in indices]) / total
        weights = (n * probs) ** -self.config.beta
        weights /= weights.max()
        return [
            (int(i), buffer.get(int(i)), float(w)) for i, w in zip(indices, weights)
        ]
