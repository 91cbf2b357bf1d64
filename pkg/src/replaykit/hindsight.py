"""Final-state goal relabeling for goal-reaching tasks.

After an episode ends, every transition is duplicated with the goal
replaced by the goal actually achieved at the episode's final state,
and the reward recomputed under that substitute goal. The original
transitions pass through untouched, so a relabeled episode contributes
exactly twice its length in stored transitions.

Goal-conditioned rewards are evaluated on the arrival state of each
transition, which makes the final relabeled transition a success by
construction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from .envs import MountainCar, extract_achieved_goal, wrap_angle
from .errors import IntegrityError, UnsupportedGoalError
from .replay import Transition

# Default success tolerances in goal space.
MOUNTAINCAR_TOLERANCE = 0.05
PENDULUM_TOLERANCE = 0.1


@dataclass
class Episode:
    """Ordered transitions of one episode, chained state to state."""

    transitions: list[Transition] = field(default_factory=list)

    def append(self, transition: Transition) -> None:
        if self.transitions:
            previous = self.transitions[-1]
            if previous.done:
                raise IntegrityError("cannot append past a terminal transition")
            if not np.array_equal(previous.next_state, transition.state):
                raise IntegrityError(
                    "transition does not chain: state differs from previous next_state"
                )
        self.transitions.append(transition)

    def __len__(self) -> int:
        return len(self.transitions)

    @property
    def final_state(self) -> np.ndarray:
        if not self.transitions:
            raise IntegrityError("episode is empty")
        return self.transitions[-1].next_state


@dataclass(frozen=True)
class GoalSpec:
    """How an environment exposes goals.

    ``native_goal`` is the goal-space encoding of the environment's own
    task: the goal vector under which ``goal_reward`` reproduces the
    native reward function exactly. ``goal_center`` / ``goal_halfwidth``
    extend the observation scaling to the appended goal components.
    """

    env_name: str
    goal_dim: int
    tolerance: float
    native_goal: tuple[float, ...]
    goal_reward: Callable[[np.ndarray, object, np.ndarray], tuple[float, bool]]
    goal_center: tuple[float, ...]
    goal_halfwidth: tuple[float, ...]

    def achieved(self, state: np.ndarray) -> np.ndarray:
        return extract_achieved_goal(self.env_name, state)


def mountaincar_goal_reward(
    state: np.ndarray,
    action,
    goal: np.ndarray,
    tolerance: float = MOUNTAINCAR_TOLERANCE,
) -> tuple[float, bool]:
    """Sparse goal reward: 0 on success, -1 otherwise.

    Success means the car's position lies within ``tolerance`` of the
    goal position, mirroring the native terminal-step semantics where
    reaching the flag yields reward 0.
    """
    success = abs(float(state[0]) - float(goal[0])) <= tolerance
    return (0.0 if success else -1.0), success


def pendulum_goal_reward(
    state: np.ndarray,
    action,
    goal: np.ndarray,
    tolerance: float = PENDULUM_TOLERANCE,
) -> tuple[float, bool]:
    """Dense goal reward: the native cost with the angle error taken
    relative to the goal angle instead of upright.

    With goal angle 0 this is exactly the native reward function.
    Success means the angle error is within ``tolerance`` radians after
    wrapping into (-pi, pi].
    """
    theta = math.atan2(float(state[1]), float(state[0]))
    delta = wrap_angle(theta - float(goal[0]))
    theta_dot = float(state[2])
    action_sq = float(np.sum(np.square(np.asarray(action, dtype=np.float64))))
    reward = -(delta**2 + 0.1 * theta_dot**2 + 0.001 * action_sq)
    return reward, abs(delta) <= tolerance


def goal_spec_for(env_name: str, tolerance: float | None = None) -> GoalSpec:
    """Goal-space description for an environment, or raise
    UnsupportedGoalError when it has none."""
    if env_name == "mountaincar":
        tol = MOUNTAINCAR_TOLERANCE if tolerance is None else float(tolerance)
        # The native task succeeds on [goal position, right wall]. A
        # tolerance band centered one tolerance past the flag covers
        # exactly that interval (positions cannot exceed the wall), so
        # this encoding reproduces native rewards verbatim.
        center = MountainCar.GOAL_POSITION + tol
        return GoalSpec(
            env_name="mountaincar",
            goal_dim=1,
            tolerance=tol,
            native_goal=(center,),
            goal_reward=lambda s, a, g: mountaincar_goal_reward(s, a, g, tol),
            goal_center=(-0.3,),
            goal_halfwidth=(0.9,),
        )
    if env_name == "pendulum":
        tol = PENDULUM_TOLERANCE if tolerance is None else float(tolerance)
        return GoalSpec(
            env_name="pendulum",
            goal_dim=1,
            tolerance=tol,
            native_goal=(0.0,),
            goal_reward=lambda s, a, g: pendulum_goal_reward(s, a, g, tol),
            goal_center=(0.0,),
            goal_halfwidth=(math.pi,),
        )
    if env_name == "cartpole":
        raise UnsupportedGoalError("cartpole does not define a goal space")
    raise ValueError(f"unknown environment {env_name!r}")


def augment_observation(state: np.ndarray, goal: np.ndarray | None) -> np.ndarray:
    """Concatenate the goal onto the observation; identity when the
    goal is absent or empty."""
    if goal is None or len(goal) == 0:
        return np.asarray(state, dtype=np.float64)
    return np.concatenate([np.asarray(state, dtype=np.float64), np.asarray(goal, dtype=np.float64)])


def relabeled_transitions(episode: Episode, spec: GoalSpec) -> list[Transition]:
    """Copies of the episode's transitions relabeled with the goal
    achieved at the final state, rewards recomputed accordingly.

    A relabeled transition is terminal exactly when it succeeds under
    the substitute goal; the last one always does.
    """
    if len(episode) == 0:
        raise IntegrityError("cannot relabel an empty episode")
    new_goal = spec.achieved(episode.final_state)
    relabeled = []
    for transition in episode.transitions:
        reward, success = spec.goal_reward(transition.next_state, transition.action, new_goal)
        relabeled.append(
            replace(
                transition,
                reward=reward,
                done=success,
                goal=new_goal.copy(),
            )
        )
    return relabeled


def relabel_episode(episode: Episode, spec: GoalSpec) -> list[Transition]:
    """Original transitions followed by their relabeled copies, in
    episode order; twice the episode length in total."""
    return list(episode.transitions) + relabeled_transitions(episode, spec)
