"""Value-based (DQN) and actor-critic (DDPG) learners.

Both agents consume batches of transitions with per-sample loss
weights, return the TD errors they trained on (for priority updates),
and keep frozen target copies of their networks: DQN refreshes its
target by hard copy on a fixed period, DDPG blends continuously with a
small Polyak factor. Observations are scaled by a fixed per-environment
affine map before they reach any network.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, NumericalError
from .hindsight import augment_observation
from .nn import (
    Gradients,
    adam_init,
    adam_step,
    backward,
    clone_mlp,
    forward,
    hard_copy,
    init_mlp,
    soft_update,
)
from .replay import Transition

# Above this TD error magnitude training is considered diverged.
DIVERGENCE_LIMIT = 1e6


class ObservationScaler:
    """Fixed affine map (obs - center) / halfwidth, the stand-in for
    batch normalization: no running statistics, so scaled values never
    depend on training history."""

    def __init__(self, center, halfwidth) -> None:
        self.center = np.asarray(center, dtype=np.float64)
        self.halfwidth = np.asarray(halfwidth, dtype=np.float64)
        if self.center.shape != self.halfwidth.shape or self.center.ndim != 1:
            raise ConfigurationError("center and halfwidth must be 1-D and equal shape")
        if np.any(self.halfwidth <= 0.0):
            raise ConfigurationError("halfwidth entries must be > 0")

    @property
    def dim(self) -> int:
        return self.center.shape[0]

    def __call__(self, obs: np.ndarray) -> np.ndarray:
        return (np.asarray(obs, dtype=np.float64) - self.center) / self.halfwidth


def scaler_for(env_spec, goal_spec=None) -> ObservationScaler:
    """Scaler over the observation, extended across the appended goal
    components when a goal spec is given."""
    center = list(env_spec.obs_center)
    halfwidth = list(env_spec.obs_halfwidth)
    if goal_spec is not None:
        center += list(goal_spec.goal_center)
        halfwidth += list(goal_spec.goal_halfwidth)
    return ObservationScaler(center, halfwidth)


def epsilon_schedule(start: float, end: float, decay_steps: int, step: int) -> float:
    """Linear decay from start to end over decay_steps, then flat."""
    if end > start:
        raise ConfigurationError(f"epsilon end {end} must not exceed start {start}")
    if decay_steps < 1:
        raise ConfigurationError(f"decay_steps must be >= 1, got {decay_steps}")
    if step < 0:
        raise ValueError(f"step must be >= 0, got {step}")
    fraction = min(step / decay_steps, 1.0)
    return start + (end - start) * fraction


def batch_arrays(transitions: list[Transition]) -> tuple[np.ndarray, ...]:
    """Stack a transition batch into (states, actions, rewards,
    next_states, dones); states include the goal when present."""
    states = np.stack([augment_observation(t.state, t.goal) for t in transitions])
    next_states = np.stack(
        [augment_observation(t.next_state, t.goal) for t in transitions]
    )
    actions = np.stack([np.asarray(t.action) for t in transitions])
    rewards = np.array([t.reward for t in transitions])
    dones = np.array([t.done for t in transitions], dtype=np.float64)
    return states, actions, rewards, next_states, dones


@dataclass(frozen=True)
class DqnConfig:
    gamma: float = 0.99
    epsilon_start: float = 1.0
    epsilon_end: float = 0.05
    epsilon_decay_steps: int = 10_000
    target_update_period: int = 500
    batch_size: int = 32
    learning_rate: float = 1e-3
    warmup: int = 1_000
    hidden_sizes: tuple[int, ...] = (64, 64)

    def __post_init__(self) -> None:
        if not 0.0 <= self.gamma <= 1.0:
            raise ConfigurationError(f"gamma must be in [0, 1], got {self.gamma}")
        if not 0.0 <= self.epsilon_end <= self.epsilon_start <= 1.0:
            raise ConfigurationError(
                "need 0 <= epsilon_end <= epsilon_start <= 1, got "
                f"{self.epsilon_end}, {self.epsilon_start}"
            )
        if self.target_update_period < 1:
            raise ConfigurationError("target_update_period must be >= 1")
        if self.batch_size < 1 or self.warmup < 1:
            raise ConfigurationError("batch_size and warmup must be >= 1")


class DqnAgent:
    """Q-learning over a dense network with a periodically frozen
    target copy.

    TD target: y = r for terminal transitions, else r + gamma * max_a'
    Q_target(s', a'). The returned TD errors are Q(s, a) - y under the
    parameters in force when the batch was drawn.
    """

    def __init__(
        self,
        obs_dim: int,
        n_actions: int,
        config: DqnConfig,
        scaler: ObservationScaler,
        rng: np.random.Generator,
    ) -> None:
        if scaler.dim != obs_dim:
            raise ConfigurationError(
                f"scaler dim {scaler.dim} != network input dim {obs_dim}"
            )
        self.config = config
        self.n_actions = n_actions
        self.scaler = scaler
        sizes = (obs_dim, *config.hidden_sizes, n_actions)
        self.q = init_mlp(sizes, rng, hidden_activation="tanh")
        self.q_target = clone_mlp(self.q)
        self.adam = adam_init(self.q, config.learning_rate)
        self.updates = 0

    def q_values(self, obs: np.ndarray) -> np.ndarray:
        values, _ = forward(self.q, self.scaler(obs))
        return values

    def act(self, obs: np.ndarray, epsilon: float, rng: np.random.Generator) -> int:
        """Epsilon-greedy action; ties resolve to the lowest index."""
        if not 0.0 <= epsilon <= 1.0:
            raise ValueError(f"epsilon must be in [0, 1], got {epsilon}")
        if epsilon > 0.0 and rng.random() < epsilon:
            return int(rng.integers(self.n_actions))
        return int(np.argmax(self.q_values(obs)))

    def td_targets(
        self, rewards: np.ndarray, next_states: np.ndarray, dones: np.ndarray
    ) -> np.ndarray:
        next_q, _ = forward(self.q_target, self.scaler(next_states))
        return rewards + self.config.gamma * (1.0 - dones) * next_q.max(axis=1)

    def update(self, transitions: list[Transition], weights: np.ndarray) -> np.ndarray:
        """One weighted TD regression step; returns per-sample TD errors."""
        states, actions, rewards, next_states, dones = batch_arrays(transitions)
        weights = np.asarray(weights, dtype=np.float64)
        n = len(transitions)
        targets = self.td_targets(rewards, next_states, dones)
        q_all, cache = forward(self.q, self.scaler(states))
        rows = np.arange(n)
        action_idx = actions.astype(int)
        td_errors = q_all[rows, action_idx] - targets
        self._check_divergence(td_errors)
        # d/dQ(s_i, a_i) of mean_i w_i * delta_i^2
        output_grad = np.zeros_like(q_all)
        output_grad[rows, action_idx] = 2.0 * weights * td_errors / n
        grads, _ = backward(self.q, cache, output_grad)
        adam_step(self.q, grads, self.adam)
        self.updates += 1
        if self.updates % self.config.target_update_period == 0:
            hard_copy(self.q_target, self.q)
        return td_errors

    @staticmethod
    def _check_divergence(td_errors: np.ndarray) -> None:
        worst = float(np.max(np.abs(td_errors)))
        if not np.isfinite(worst) or worst > DIVERGENCE_LIMIT:
            raise NumericalError(
                f"TD error magnitude {worst:.3g} exceeds divergence limit"
            )

    def greedy_action(self, obs: np.ndarray) -> int:
        return int(np.argmax(self.q_values(obs)))


@dataclass(frozen=True)
class DdpgConfig:
    gamma: float = 0.99
    tau: float = 0.005
    actor_lr: float = 1e-4
    critic_lr: float = 1e-3
    batch_size: int = 64
    warmup: int = 1_000
    ou_theta: float = 0.15
    ou_sigma: float = 0.2
    ou_mu: float = 0.0
    hidden_sizes: tuple[int, ...] = (64, 64)

    def __post_init__(self) -> None:
        if not 0.0 <= self.gamma <= 1.0:
            raise ConfigurationError(f"gamma must be in [0, 1], got {self.gamma}")
        if not 0.0 < self.tau <= 1.0:
            raise ConfigurationError(f"tau must be in (0, 1], got {self.tau}")
        if self.batch_size < 1 or self.warmup < 1:
            raise ConfigurationError("batch_size and warmup must be >= 1")
        if self.ou_theta <= 0.0 or self.ou_sigma < 0.0:
            raise ConfigurationError("need ou_theta > 0 and ou_sigma >= 0")


class OUNoise:
    """Ornstein-Uhlenbeck exploration noise.

    Discrete recurrence n <- n + theta * (mu - n) + sigma * gaussian;
    the stationary standard deviation is approximately
    sigma / sqrt(2 * theta) for small theta.
    """

    def __init__(self, dim: int, theta: float, sigma: float, mu: float = 0.0) -> None:
        self.dim = dim
        self.theta = theta
        self.sigma = sigma
        self.mu = mu
        self.state = np.full(dim, mu, dtype=np.float64)

    def reset(self) -> None:
        self.state[:] = self.mu

    def sample(self, rng: np.random.Generator) -> np.ndarray:
        self.state += self.theta * (self.mu - self.state)
        self.state += self.sigma * rng.standard_normal(self.dim)
        return self.state.copy()

    @staticmethod
    def stationary_std(theta: float, sigma: float) -> float:
        return sigma / math.sqrt(2.0 * theta)


class DdpgAgent:
    """Deterministic-policy actor-critic for continuous actions.

    The actor ends in tanh scaled to the action bound. Critic training
    is a weighted TD regression; the actor ascends the critic by
    chaining the critic's action-input gradient into its own backward
    pass. Both targets track online networks by Polyak blending after
    every update.
    """

    def __init__(
        self,
        obs_dim: int,
        action_dim: int,
        action_low: float,
        action_high: float,
        config: DdpgConfig,
        scaler: ObservationScaler,
        rng: np.random.Generator,
    ) -> None:
        if scaler.dim != obs_dim:
            raise ConfigurationError(
                f"scaler dim {scaler.dim} != network input dim {obs_dim}"
            )
        if not (action_high > 0.0 and action_low == -action_high):
            raise ConfigurationError(
                f"action bounds must be symmetric, got [{action_low}, {action_high}]"
            )
        self.config = config
        self.action_dim = action_dim
        self.action_low = action_low
        self.action_high = action_high
        self.scaler = scaler
        actor_sizes = (obs_dim, *config.hidden_sizes, action_dim)
        critic_sizes = (obs_dim + action_dim, *config.hidden_sizes, 1)
        self.actor = init_mlp(
            actor_sizes,
            rng,
            hidden_activation="tanh",
            output_activation="tanh",
            output_scale=action_high,
            final_layer_scale=1e-3,
        )
        self.critic = init_mlp(critic_sizes, rng, hidden_activation="tanh")
        self.actor_target = clone_mlp(self.actor)
        self.critic_target = clone_mlp(self.critic)
        self.actor_adam = adam_init(self.actor, config.actor_lr)
        self.critic_adam = adam_init(self.critic, config.critic_lr)

    def greedy_action(self, obs: np.ndarray) -> np.ndarray:
        action, _ = forward(self.actor, self.scaler(obs))
        return action

    def act(
        self, obs: np.ndarray, noise: OUNoise, rng: np.random.Generator
    ) -> np.ndarray:
        """Actor output plus exploration noise, clipped to bounds."""
        action = self.greedy_action(obs) + noise.sample(rng)
        return np.clip(action, self.action_low, self.action_high)

    def _critic_input(self, scaled_states: np.ndarray, actions: np.ndarray) -> np.ndarray:
        actions = actions.reshape(scaled_states.shape[0], self.action_dim)
        return np.concatenate([scaled_states, actions], axis=1)

    def critic_update(
        self, transitions: list[Transition], weights: np.ndarray
    ) -> np.ndarray:
        """Weighted TD regression on the critic; returns TD errors."""
        states, actions, rewards, next_states, dones = batch_arrays(transitions)
        weights = np.asarray(weights, dtype=np.float64)
        n = len(transitions)
        scaled_next = self.scaler(next_states)
        next_actions, _ = forward(self.actor_target, scaled_next)
        next_q, _ = forward(self.critic_target, self._critic_input(scaled_next, next_actions))
        targets = rewards + self.config.gamma * (1.0 - dones) * next_q[:, 0]
        q, cache = forward(self.critic, self._critic_input(self.scaler(states), actions))
        td_errors = q[:, 0] - targets
        worst = float(np.max(np.abs(td_errors)))
        if not np.isfinite(worst) or worst > DIVERGENCE_LIMIT:
            raise NumericalError(
                f"TD error magnitude {worst:.3g} exceeds divergence limit"
            )
        output_grad = (2.0 * weights * td_errors / n)[:, None]
        grads, _ = backward(self.critic, cache, output_grad)
        adam_step(self.critic, grads, self.critic_adam)
        return td_errors

    def actor_update(self, transitions: list[Transition]) -> None:
        """Ascend mean_i Q(s_i, actor(s_i)) through the frozen critic."""
        states = np.stack(
            [augment_observation(t.state, t.goal) for t in transitions]
        )
        scaled = self.scaler(states)
        n = scaled.shape[0]
        actions, actor_cache = forward(self.actor, scaled)
        q, critic_cache = forward(self.critic, self._critic_input(scaled, actions))
        # Gradient of -mean(Q) w.r.t. the critic's inputs, action slice.
        up = np.full((n, 1), -1.0 / n)
        _, d_input = backward(self.critic, critic_cache, up)
        d_actions = d_input[:, -self.action_dim :]
        grads, _ = backward(self.actor, actor_cache, d_actions)
        adam_step(self.actor, grads, self.actor_adam)

    def sync_targets(self) -> None:
        soft_update(self.actor_target, self.actor, self.config.tau)
        soft_update(self.critic_target, self.critic, self.config.tau)

    def update(self, transitions: list[Transition], weights: np.ndarray) -> np.ndarray:
        """Critic step, actor step, then target blend; returns the
        critic's TD errors."""
        td_errors = self.critic_update(transitions, weights)
        self.actor_update(transitions)
        self.sync_targets()
        return td_errors
