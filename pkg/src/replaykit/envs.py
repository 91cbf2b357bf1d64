"""Native classic-control environments: CartPole, MountainCar, Pendulum.

Each environment is a small stateful stepper over a pure dynamics
function. All randomness flows through the generator handed to
``reset``, so a (seed, action sequence) pair fully determines a
trajectory. ``done`` means task termination; hitting the step limit
sets ``truncated`` instead, and both can be true on the same step.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import UnsupportedGoalError


@dataclass(frozen=True)
class DiscreteActions:
    n: int


@dataclass(frozen=True)
class BoxAction:
    dim: int
    low: float
    high: float


@dataclass(frozen=True)
class EnvSpec:
    """Static facts a harness needs: shapes, limits, and the fixed
    affine observation scaling that stands in for batch normalization.

    ``solve_reward`` is the 100-episode evaluation mean at which the
    task counts as solved, or None when the task has no such threshold.
    """

    name: str
    obs_dim: int
    actions: DiscreteActions | BoxAction
    max_episode_steps: int
    solve_reward: float | None
    obs_center: tuple[float, ...]
    obs_halfwidth: tuple[float, ...]


@dataclass(frozen=True)
class StepResult:
    next_state: np.ndarray
    reward: float
    done: bool
    truncated: bool


def _check_discrete(action, n: int) -> int:
    if isinstance(action, (bool, np.bool_)):
        raise ValueError(f"action must be an integer in [0, {n}), got {action!r}")
    if isinstance(action, (np.integer, int)):
        action = int(action)
    elif isinstance(action, float) and action.is_integer():
        action = int(action)
    else:
        raise ValueError(f"action must be an integer in [0, {n}), got {action!r}")
    if not 0 <= action < n:
        raise ValueError(f"action {action} out of range [0, {n})")
    return action


class CartPole:
    """Pole balancing on a cart; push left or right each step.

    Euler integration at dt = 0.02 s. Reward is +1 every step; the
    episode ends when the cart leaves +-2.4 or the pole tips past 12
    degrees, and truncates at 200 steps.
    """

    GRAVITY = 9.8
    CART_MASS = 1.0
    POLE_MASS = 0.1
    TOTAL_MASS = CART_MASS + POLE_MASS
    HALF_POLE_LENGTH = 0.5
    POLE_MASS_LENGTH = POLE_MASS * HALF_POLE_LENGTH
    FORCE_MAG = 10.0
    DT = 0.02
    X_LIMIT = 2.4
    THETA_LIMIT = 12.0 * math.pi / 180.0

    spec = EnvSpec(
        name="cartpole",
        obs_dim=4,
        actions=DiscreteActions(2),
        max_episode_steps=200,
        solve_reward=200.0,
        obs_center=(0.0, 0.0, 0.0, 0.0),
        obs_halfwidth=(2.4, 3.0, 12.0 * math.pi / 180.0, 3.0),
    )

    def __init__(self) -> None:
        self._state: np.ndarray | None = None
        self._elapsed = 0

    def reset(self, rng: np.random.Generator) -> np.ndarray:
        self._state = rng.uniform(-0.05, 0.05, size=4)
        self._elapsed = 0
        return self._state.copy()

    @staticmethod
    def dynamics(state: np.ndarray, action: int) -> tuple[np.ndarray, float, bool]:
        action = _check_discrete(action, 2)
        x, x_dot, theta, theta_dot = state
        force = CartPole.FORCE_MAG if action == 1 else -CartPole.FORCE_MAG
        cos_t = math.cos(theta)
        sin_t = math.sin(theta)
        temp = (
            force + CartPole.POLE_MASS_LENGTH * theta_dot**2 * sin_t
        ) / CartPole.TOTAL_MASS
        theta_acc = (CartPole.GRAVITY * sin_t - cos_t * temp) / (
            CartPole.HALF_POLE_LENGTH
            * (4.0 / 3.0 - CartPole.POLE_MASS * cos_t**2 / CartPole.TOTAL_MASS)
        )
        x_acc = temp - CartPole.POLE_MASS_LENGTH * theta_acc * cos_t / CartPole.TOTAL_MASS
        # Semi-explicit Euler: positions advance with the old velocities.
        x = x + CartPole.DT * x_dot
        x_dot = x_dot + CartPole.DT * x_acc
        theta = theta + CartPole.DT * theta_dot
        theta_dot = theta_dot + CartPole.DT * theta_acc
        next_state = np.array([x, x_dot, theta, theta_dot])
        done = bool(abs(x) > CartPole.X_LIMIT or abs(theta) > CartPole.THETA_LIMIT)
        return next_state, 1.0, done

    def step(self, action) -> StepResult:
        if self._state is None:
            raise RuntimeError("step before reset")
        next_state, reward, done = self.dynamics(self._state, action)
        self._state = next_state
        self._elapsed += 1
        truncated = self._elapsed >= self.spec.max_episode_steps
        return StepResult(next_state.copy(), reward, done, truncated)


class MountainCar:
    """Underpowered car in a valley; throttle left, coast, or right.

    Reward is -1 per step until the car reaches position >= 0.5, where
    the episode terminates with reward 0. Truncates at 200 steps.
    """

    FORCE = 0.001
    GRAVITY = 0.0025
    MIN_POSITION = -1.2
    MAX_POSITION = 0.6
    MAX_SPEED = 0.07
    GOAL_POSITION = 0.5

    spec = EnvSpec(
        name="mountaincar",
        obs_dim=2,
        actions=DiscreteActions(3),
        max_episode_steps=200,
        solve_reward=-110.0,
        obs_center=(-0.3, 0.0),
        obs_halfwidth=(0.9, 0.07),
    )

    def __init__(self) -> None:
        self._state: np.ndarray | None = None
        self._elapsed = 0

    def reset(self, rng: np.random.Generator) -> np.ndarray:
        self._state = np.array([rng.uniform(-0.6, -0.4), 0.0])
        self._elapsed = 0
        return self._state.copy()

    @staticmethod
    def dynamics(state: np.ndarray, action: int) -> tuple[np.ndarray, float, bool]:
        action = _check_discrete(action, 3)
        position, velocity = state
        velocity += (action - 1) * MountainCar.FORCE + math.cos(3 * position) * (
            -MountainCar.GRAVITY
        )
        velocity = min(max(velocity, -MountainCar.MAX_SPEED), MountainCar.MAX_SPEED)
        position += velocity
        position = min(max(position, MountainCar.MIN_POSITION), MountainCar.MAX_POSITION)
        if position == MountainCar.MIN_POSITION and velocity < 0.0:
            velocity = 0.0  # inelastic left wall
        done = bool(position >= MountainCar.GOAL_POSITION)
        reward = 0.0 if done else -1.0
        return np.array([position, velocity]), reward, done

    def step(self, action) -> StepResult:
        if self._state is None:
            raise RuntimeError("step before reset")
        next_state, reward, done = self.dynamics(self._state, action)
        self._state = next_state
        self._elapsed += 1
        truncated = self._elapsed >= self.spec.max_episode_steps
        return StepResult(next_state.copy(), reward, done, truncated)


def wrap_angle(theta: float) -> float:
    """Wrap an angle into (-pi, pi]."""
    wrapped = math.fmod(theta + math.pi, 2.0 * math.pi)
    if wrapped <= 0.0:
        wrapped += 2.0 * math.pi
    return wrapped - math.pi


class Pendulum:
    """Torque-controlled pendulum swing-up with the angle observed as
    (cos, sin) so the state space has no seam at +-pi.

    Reward is -(theta^2 + 0.1 * theta_dt^2 + 0.001 * action^2) with
    theta wrapped into (-pi, pi] and measured from upright; the cost is
    charged on the state the torque is applied in. Episodes never
    terminate and truncate at 200 steps.
    """

    GRAVITY = 10.0
    MASS = 1.0
    LENGTH = 1.0
    DT = 0.05
    MAX_TORQUE = 2.0
    MAX_SPEED = 8.0

    spec = EnvSpec(
        name="pendulum",
        obs_dim=3,
        actions=BoxAction(dim=1, low=-2.0, high=2.0),
        max_episode_steps=200,
        solve_reward=None,
        obs_center=(0.0, 0.0, 0.0),
        obs_halfwidth=(1.0, 1.0, 8.0),
    )

    def __init__(self) -> None:
        self._state: np.ndarray | None = None
        self._elapsed = 0

    @staticmethod
    def observation(theta: float, theta_dot: float) -> np.ndarray:
        return np.array([math.cos(theta), math.sin(theta), theta_dot])

    def reset(self, rng: np.random.Generator) -> np.ndarray:
        theta = rng.uniform(-math.pi, math.pi)
        theta_dot = rng.uniform(-1.0, 1.0)
        self._state = self.observation(theta, theta_dot)
        self._elapsed = 0
        return self._state.copy()

    @staticmethod
    def reward(state: np.ndarray, action: float) -> float:
        theta = math.atan2(state[1], state[0])
        theta_dot = state[2]
        return -(
            wrap_angle(theta) ** 2 + 0.1 * theta_dot**2 + 0.001 * float(action) ** 2
        )

    @staticmethod
    def dynamics(state: np.ndarray, action) -> tuple[np.ndarray, float, bool]:
        action = np.asarray(action, dtype=np.float64).reshape(-1)
        if action.shape != (1,):
            raise ValueError(f"action must be a single torque, got shape {action.shape}")
        if not np.isfinite(action[0]):
            raise ValueError(f"action must be finite, got {action[0]!r}")
        torque = min(max(float(action[0]), -Pendulum.MAX_TORQUE), Pendulum.MAX_TORQUE)
        theta = math.atan2(state[1], state[0])
        theta_dot = state[2]
        reward = Pendulum.reward(state, torque)
        g, m, length, dt = (
            Pendulum.GRAVITY,
            Pendulum.MASS,
            Pendulum.LENGTH,
            Pendulum.DT,
        )
        theta_acc = 3.0 * g / (2.0 * length) * math.sin(theta) + 3.0 / (
            m * length**2
        ) * torque
        theta_dot = theta_dot + theta_acc * dt
        theta_dot = min(max(theta_dot, -Pendulum.MAX_SPEED), Pendulum.MAX_SPEED)
        theta = theta + theta_dot * dt
        return Pendulum.observation(theta, theta_dot), reward, False

    def step(self, action) -> StepResult:
        if self._state is None:
            raise RuntimeError("step before reset")
        next_state, reward, done = self.dynamics(self._state, action)
        self._state = next_state
        self._elapsed += 1
        truncated = self._elapsed >= self.spec.max_episode_steps
        return StepResult(next_state.copy(), reward, done, truncated)


_REGISTRY = {
    "cartpole": CartPole,
    "mountaincar": MountainCar,
    "pendulum": Pendulum,
}


def env_names() -> list[str]:
    return sorted(_REGISTRY)


def make_env(name: str):
    """Instantiate an environment by name."""
    try:
        return _REGISTRY[name]()
    except KeyError:
        raise ValueError(
            f"unknown environment {name!r}; choose from {env_names()}"
        ) from None


def env_spec(name: str) -> EnvSpec:
    try:
        return _REGISTRY[name].spec
    except KeyError:
        raise ValueError(
            f"unknown environment {name!r}; choose from {env_names()}"
        ) from None


def extract_achieved_goal(name: str, state: np.ndarray) -> np.ndarray:
    """Project a state onto the environment's goal space.

    MountainCar exposes the car's position, Pendulum the wrapped angle.
    CartPole defines no goal space.
    """
    if name == "mountaincar":
        return np.array([float(state[0])])
    if name == "pendulum":
        return np.array([math.atan2(float(state[1]), float(state[0]))])
    if name == "cartpole":
        raise UnsupportedGoalError("cartpole does not define a goal space")
    raise ValueError(f"unknown environment {name!r}; choose from {env_names()}")
