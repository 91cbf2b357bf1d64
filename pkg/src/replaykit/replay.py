"""Ring-buffer transition storage with uniform and combined sampling.

The buffer is a fixed-capacity FIFO over :class:`Transition` records.
Samplers are free functions so that strategies can be stacked: combined
sampling wraps any inner sampler and forces the most recent transition
into slot 0 of every batch.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, NotReadyError


@dataclass(frozen=True)
class Transition:
    """One environment step.

    ``done`` records task termination only; episodes cut off by a step
    limit store ``done=False`` so that learners bootstrap through the
    cutoff. ``goal`` is None unless the run relabels goals, in which
    case it holds the goal vector the reward was computed against.
    """

    state: np.ndarray
    action: int | float | np.ndarray
    reward: float
    next_state: np.ndarray
    done: bool
    goal: np.ndarray | None = None

    def __post_init__(self) -> None:
        state = np.asarray(self.state, dtype=np.float64)
        next_state = np.asarray(self.next_state, dtype=np.float64)
        if state.ndim != 1 or next_state.ndim != 1:
            raise ValueError("states must be 1-D vectors")
        if state.shape != next_state.shape:
            raise ValueError(
                f"state shape {state.shape} != next_state shape {next_state.shape}"
            )
        if not np.all(np.isfinite(state)) or not np.all(np.isfinite(next_state)):
            raise ValueError("state components must be finite")
        if not np.isfinite(self.reward):
            raise ValueError(f"reward must be finite, got {self.reward!r}")
        goal = self.goal
        if goal is not None:
            goal = np.asarray(goal, dtype=np.float64)
            if goal.ndim != 1:
                raise ValueError("goal must be a 1-D vector")
            if not np.all(np.isfinite(goal)):
                raise ValueError("goal components must be finite")
        object.__setattr__(self, "state", state)
        object.__setattr__(self, "next_state", next_state)
        object.__setattr__(self, "reward", float(self.reward))
        object.__setattr__(self, "done", bool(self.done))
        object.__setattr__(self, "goal", goal)


class ReplayBuffer:
    """Fixed-capacity FIFO store of transitions.

    Slots are reused in insertion order once the buffer is full; the
    slot index returned by :meth:`append` is stable until that slot is
    overwritten, so priority samplers can key their bookkeeping on it.
    """

    def __init__(self, capacity: int) -> None:
        if not isinstance(capacity, int) or capacity < 1:
            raise ConfigurationError(f"capacity must be a positive int, got {capacity!r}")
        self.capacity = capacity
        self._slots: list[Transition | None] = [None] * capacity
        self._cursor = 0  # next slot to write
        self._count = 0
        self._state_dim: int | None = None
        self._has_goal: bool | None = None

    def __len__(self) -> int:
        return self._count

    def append(self, transition: Transition) -> int:
        """Store ``transition``, evicting the oldest entry when full.

        Returns the slot index written.
        """
        if not isinstance(transition, Transition):
            raise TypeError(f"expected Transition, got {type(transition).__name__}")
        if self._state_dim is None:
            self._state_dim = transition.state.shape[0]
            self._has_goal = transition.goal is not None
        else:
            if transition.state.shape[0] != self._state_dim:
                raise ValueError(
                    f"state dim {transition.state.shape[0]} != buffer dim {self._state_dim}"
                )
            if (transition.goal is not None) != self._has_goal:
                raise ValueError("mixing goal-labelled and goal-free transitions")
        index = self._cursor
        self._slots[index] = transition
        self._cursor = (self._cursor + 1) % self.capacity
        self._count = min(self._count + 1, self.capacity)
        return index

    def get(self, index: int) -> Transition:
        if not 0 <= index < self.capacity:
            raise IndexError(f"slot {index} out of range for capacity {self.capacity}")
        slot = self._slots[index]
        if slot is None:
            raise IndexError(f"slot {index} is empty")
        return slot

    def latest(self) -> tuple[int, Transition]:
        """Index and value of the most recently appended transition."""
        if self._count == 0:
            raise NotReadyError("buffer is empty")
        index = (self._cursor - 1) % self.capacity
        return index, self._slots[index]  # type: ignore[return-value]


def sample_uniform(
    buffer: ReplayBuffer, batch_size: int, rng: np.random.Generator
) -> list[tuple[int, Transition]]:
    """Draw ``batch_size`` transitions uniformly with replacement."""
    if batch_size < 1:
        raise ValueError(f"batch_size must be >= 1, got {batch_size}")
    if len(buffer) == 0:
        raise NotReadyError("cannot sample from an empty buffer")
    indices = rng.integers(0, len(buffer), size=batch_size)
    return [(int(i), buffer.get(int(i))) for i in indices]


def sample_combined(
    buffer: ReplayBuffer,
    batch_size: int,
    inner_sampler,
    rng: np.random.Generator,
) -> list[tuple]:
    """Sample a batch whose first element is always the newest transition.

    The remaining ``batch_size - 1`` rows come from ``inner_sampler``,
    called as ``inner_sampler(buffer, n, rng)``. The forced row mirrors
    the arity of the inner rows; weighted samplers get weight 1.0 for
    the forced transition.
    """
    if batch_size < 1:
        raise ValueError(f"batch_size must be >= 1, got {batch_size}")
    if len(buffer) == 0:
        raise NotReadyError("cannot sample from an empty buffer")
    rest: list[tuple] = []
    if batch_size > 1:
        rest = list(inner_sampler(buffer, batch_size - 1, rng))
    index, latest = buffer.latest()
    if rest and len(rest[0]) == 3:
        head: tuple = (index, latest, 1.0)
    else:
        head = (index, latest)
    return [head] + rest


@dataclass
class Batch:
    """Normalized sample: parallel slot indices, transitions, and
    per-sample loss weights (all 1.0 for unweighted samplers)."""

    indices: list[int]
    transitions: list[Transition]
    weights: np.ndarray = field(default_factory=lambda: np.empty(0))

    def __post_init__(self) -> None:
        if self.weights.size == 0:
            self.weights = np.ones(len(self.transitions))
        if not (len(self.indices) == len(self.transitions) == len(self.weights)):
            raise ValueError("batch fields must have equal length")

    def __len__(self) -> int:
        return len(self.transitions)


def rows_to_batch(rows: list[tuple]) -> Batch:
    """Convert sampler output rows, with or without weights, to a Batch."""
    indices = [int(r[0]) for r in rows]
    transitions = [r[1] for r in rows]
    weights = np.array([float(r[2]) if len(r) == 3 else 1.0 for r in rows])
    return Batch(indices=indices, transitions=transitions, weights=weights)
