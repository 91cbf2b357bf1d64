from __future__ import annotations

import copy
import math

import numpy as np
import pytest
from scipy import stats

from replaykit.agents import (
    DdpgAgent,
    DdpgConfig,
    DqnAgent,
    DqnConfig,
    ObservationScaler,
    OUNoise,
    batch_arrays,
    epsilon_schedule,
    scaler_for,
)
from replaykit.envs import env_spec
from replaykit.errors import ConfigurationError, NumericalError
from replaykit.hindsight import goal_spec_for
from replaykit.nn import Mlp, forward
from replaykit.replay import Transition


def identity_scaler(dim: int) -> ObservationScaler:
    return ObservationScaler(np.zeros(dim), np.ones(dim))


def make_dqn(obs_dim=3, n_actions=2, rng_seed=0, **config) -> DqnAgent:
    cfg = DqnConfig(**config)
    return DqnAgent(obs_dim, n_actions, cfg, identity_scaler(obs_dim),
                    np.random.default_rng(rng_seed))


def make_ddpg(obs_dim=3, action_dim=1, rng_seed=0, **config) -> DdpgAgent:
    cfg = DdpgConfig(**config)
    return DdpgAgent(obs_dim, action_dim, -2.0, 2.0, cfg, identity_scaler(obs_dim),
                     np.random.default_rng(rng_seed))


def random_transitions(n, obs_dim=3, discrete=True, rng_seed=1, done_rate=0.2):
    rng = np.random.default_rng(rng_seed)
    out = []
    for _ in range(n):
        action = int(rng.integers(2)) if discrete else rng.uniform(-2.0, 2.0, size=1)
        out.append(
            Transition(
                state=rng.normal(size=obs_dim),
                action=action,
                reward=float(rng.normal()),
                next_state=rng.normal(size=obs_dim),
                done=bool(rng.random() < done_rate),
            )
        )
    return out


def test_epsilon_schedule_linear_and_clamped() -> None:
    assert epsilon_schedule(1.0, 0.05, 100, 0) == 1.0
    assert epsilon_schedule(1.0, 0.05, 100, 50) == pytest.approx(0.525)
    assert epsilon_schedule(1.0, 0.05, 100, 100) == pytest.approx(0.05)
    assert epsilon_schedule(1.0, 0.05, 100, 10_000) == pytest.approx(0.05)
    values = [epsilon_schedule(1.0, 0.05, 500, s) for s in range(0, 2000, 7)]
    assert all(a >= b for a, b in zip(values, values[1:]))
    with pytest.raises(ConfigurationError):
        epsilon_schedule(0.1, 0.5, 100, 0)
    with pytest.raises(ValueError):
        epsilon_schedule(1.0, 0.0, 100, -1)


def test_observation_scaler() -> None:
    scaler = ObservationScaler([1.0, -1.0], [2.0, 4.0])
    assert scaler(np.array([3.0, -5.0])) == pytest.approx([1.0, -1.0])
    batch = scaler(np.array([[3.0, -5.0], [1.0, -1.0]]))
    assert batch[1] == pytest.approx([0.0, 0.0])
    with pytest.raises(ConfigurationError):
        ObservationScaler([0.0], [0.0])


def test_scaler_for_env_and_goal() -> None:
    scaler = scaler_for(env_spec("mountaincar"))
    assert scaler.dim == 2
    scaler = scaler_for(env_spec("mountaincar"), goal_spec_for("mountaincar"))
    assert scaler.dim == 3
    scaled = scaler(np.array([-0.3, 0.0, 0.6]))
    assert scaled[0] == pytest.approx(0.0)
    assert scaled[2] == pytest.approx(1.0)


def test_batch_arrays_stacks_and_augments() -> None:
    transitions = random_transitions(4)
    states, actions, rewards, next_states, dones = batch_arrays(transitions)
    assert states.shape == (4, 3)
    assert next_states.shape == (4, 3)
    assert rewards.shape == (4,)
    assert set(np.unique(dones)) <= {0.0, 1.0}
    goal = np.array([0.7])
    with_goals = [
        Transition(t.state, t.action, t.reward, t.next_state, t.done, goal=goal)
        for t in transitions
    ]
    states, _, _, next_states, _ = batch_arrays(with_goals)
    assert states.shape == (4, 4)
    assert np.all(states[:, 3] == 0.7)
    assert np.all(next_states[:, 3] == 0.7)


def test_dqn_act_greedy_and_tie_break() -> None:
    agent = make_dqn()
    # zero the network: all Q equal, argmax must pick action 0
    for w in agent.q.weights:
        w[...] = 0.0
    for b in agent.q.biases:
        b[...] = 0.0
    rng = np.random.default_rng(2)
    assert agent.act(np.zeros(3), 0.0, rng) == 0
    # bias action 1 upward: greedy picks it
    agent.q.biases[-1][1] = 1.0
    assert agent.act(np.ones(3), 0.0, rng) == 1


def test_dqn_act_epsilon_one_is_uniform() -> None:
    agent = make_dqn(n_actions=3)
    rng = np.random.default_rng(3)
    counts = np.zeros(3)
    for _ in range(30_000):
        counts[agent.act(np.zeros(3), 1.0, rng)] += 1
    assert stats.chisquare(counts).pvalue > 0.01
    with pytest.raises(ValueError):
        agent.act(np.zeros(3), 1.5, rng)


def test_dqn_td_targets() -> None:
    agent = make_dqn(gamma=0.99)
    # target net outputs fixed values via biases
    for w in agent.q_target.weights:
        w[...] = 0.0
    for b in agent.q_target.biases:
        b[...] = 0.0
    agent.q_target.biases[-1][:] = [10.0, 4.0]
    rewards = np.array([1.0, 2.0, 3.0])
    next_states = np.zeros((3, 3))
    dones = np.array([0.0, 1.0, 0.0])
    targets = agent.td_targets(rewards, next_states, dones)
    assert targets == pytest.approx([1.0 + 0.99 * 10.0, 2.0, 3.0 + 0.99 * 10.0])


def test_dqn_td_targets_gamma_zero() -> None:
    agent = make_dqn(gamma=0.0)
    rewards = np.array([5.0, -1.0])
    targets = agent.td_targets(rewards, np.zeros((2, 3)), np.zeros(2))
    assert targets == pytest.approx([5.0, -1.0])


def test_dqn_update_returns_pre_update_td_errors() -> None:
    agent = make_dqn()
    transitions = random_transitions(8)
    frozen_q = copy.deepcopy(agent.q)
    frozen_target = copy.deepcopy(agent.q_target)
    td = agent.update(transitions, np.ones(8))
    states, actions, rewards, next_states, dones = batch_arrays(transitions)
    next_q, _ = forward(frozen_target, next_states)
    y = rewards + agent.config.gamma * (1.0 - dones) * next_q.max(axis=1)
    q, _ = forward(frozen_q, states)
    expected = q[np.arange(8), actions.astype(int)] - y
    assert td == pytest.approx(expected)


def test_dqn_update_zero_td_error_leaves_params_fixed() -> None:
    # with gamma 0 and rewards equal to the current Q(s, a) values the
    # TD errors vanish, so the update must not move any parameter
    agent = make_dqn(gamma=0.0)
    transitions = random_transitions(6)
    states, actions, _, _, _ = batch_arrays(transitions)
    q, _ = forward(agent.q, states)
    matched = [
        Transition(t.state, t.action, float(q[i, int(t.action)]), t.next_state, t.done)
        for i, t in enumerate(transitions)
    ]
    before = [w.copy() for w in agent.q.weights]
    td = agent.update(matched, np.ones(6))
    assert np.abs(td).max() < 1e-12
    for b, a in zip(before, agent.q.weights):
        assert np.array_equal(b, a)


def test_dqn_update_zero_weights_leave_params_fixed() -> None:
    agent = make_dqn()
    transitions = random_transitions(5)
    before = [w.copy() for w in agent.q.weights]
    agent.update(transitions, np.zeros(5))
    for b, a in zip(before, agent.q.weights):
        assert np.array_equal(b, a)


def test_dqn_weighted_loss_gradient_single_sample() -> None:
    """One transition with weight w: dLoss/dQ(s, a) must equal
    2 * w * delta, verified through the parameter update direction."""
    agent = make_dqn(gamma=0.0, learning_rate=1e-3)
    t = Transition(np.ones(3), 1, 10.0, np.zeros(3), True)
    q_before, _ = forward(agent.q, np.ones(3)[None, :])
    delta = float(q_before[0, 1] - 10.0)
    td = agent.update([t], np.array([0.5]))
    assert td[0] == pytest.approx(delta)


def test_dqn_target_sync_period() -> None:
    agent = make_dqn(target_update_period=3, warmup=1)
    transitions = random_transitions(4)
    snapshots = []
    for step in range(1, 7):
        agent.update(transitions, np.ones(4))
        snapshots.append([b.copy() for b in agent.q_target.biases])
    # target changed only after updates 3 and 6
    def same(a, b):
        return all(np.array_equal(x, y) for x, y in zip(a, b))

    assert same(snapshots[0], snapshots[1])
    assert not same(snapshots[1], snapshots[2])
    assert same(snapshots[3], snapshots[4])
    assert not same(snapshots[4], snapshots[5])


def test_dqn_divergence_guard() -> None:
    agent = make_dqn(gamma=0.0)
    t = Transition(np.ones(3), 0, 1e9, np.zeros(3), True)
    with pytest.raises(NumericalError):
        agent.update([t], np.ones(1))


def test_ou_noise_zero_sigma_stays_at_mu() -> None:
    noise = OUNoise(2, theta=1.0, sigma=0.0, mu=0.0)
    rng = np.random.default_rng(4)
    for _ in range(10):
        assert noise.sample(rng) == pytest.approx([0.0, 0.0])
    noise = OUNoise(1, theta=0.5, sigma=0.0, mu=3.0)
    noise.state[0] = 1.0
    noise.sample(rng)
    assert noise.state[0] == pytest.approx(2.0)  # 1 + 0.5 * (3 - 1)


def test_ou_noise_reset() -> None:
    noise = OUNoise(1, theta=0.15, sigma=0.2)
    rng = np.random.default_rng(5)
    noise.sample(rng)
    noise.reset()
    assert noise.state == pytest.approx([0.0])


def test_ou_noise_stationary_std() -> None:
    theta, sigma = 0.15, 0.2
    noise = OUNoise(1, theta=theta, sigma=sigma)
    rng = np.random.default_rng(6)
    n = 200_000
    burn = 1_000
    samples = np.empty(n)
    for i in range(burn):
        noise.sample(rng)
    for i in range(n):
        samples[i] = noise.sample(rng)[0]
    expected = OUNoise.stationary_std(theta, sigma)
    assert samples.std() == pytest.approx(expected, rel=0.1)


def test_ddpg_action_clipped_to_bounds() -> None:
    agent = make_ddpg()
    # an OU state far outside the bounds forces clipping
    noise = OUNoise(1, theta=1.0, sigma=0.0, mu=5.0)
    rng = np.random.default_rng(7)
    action = agent.act(np.zeros(3), noise, rng)
    assert action == pytest.approx([2.0])
    noise = OUNoise(1, theta=1.0, sigma=0.0, mu=-5.0)
    action = agent.act(np.zeros(3), noise, rng)
    assert action == pytest.approx([-2.0])


def test_ddpg_greedy_within_bounds() -> None:
    agent = make_ddpg()
    rng = np.random.default_rng(8)
    for _ in range(20):
        action = agent.greedy_action(rng.normal(size=3))
        assert -2.0 <= action[0] <= 2.0


def test_ddpg_critic_target_hand_check() -> None:
    """r = 0.5, gamma = 0.9, target critic pinned at 1.0 -> y = 1.4."""
    agent = make_ddpg(gamma=0.9)
    for w in agent.critic_target.weights:
        w[...] = 0.0
    for b in agent.critic_target.biases:
        b[...] = 0.0
    agent.critic_target.biases[-1][0] = 1.0
    t = Transition(np.zeros(3), np.array([0.3]), 0.5, np.zeros(3), False)
    q, _ = forward(agent.critic, np.concatenate([np.zeros(3), np.array([0.3])])[None, :])
    td = agent.critic_update([t], np.ones(1))
    assert td[0] == pytest.approx(float(q[0, 0]) - 1.4)


def test_ddpg_critic_terminal_ignores_bootstrap() -> None:
    agent = make_ddpg(gamma=0.9)
    t = Transition(np.zeros(3), np.array([0.0]), 2.0, np.zeros(3), True)
    q, _ = forward(agent.critic, np.zeros(4)[None, :])
    td = agent.critic_update([t], np.ones(1))
    assert td[0] == pytest.approx(float(q[0, 0]) - 2.0)


def test_ddpg_actor_gradient_matches_finite_differences() -> None:
    """The chained actor gradient equals d/d theta of
    -mean_i Q(s_i, actor(s_i)) by central differences."""
    agent = make_ddpg(rng_seed=11)
    rng = np.random.default_rng(12)
    states = rng.normal(size=(4, 3))

    def objective() -> float:
        actions, _ = forward(agent.actor, states)
        q, _ = forward(agent.critic, np.concatenate([states, actions], axis=1))
        return float(-np.mean(q))

    actions, actor_cache = forward(agent.actor, states)
    q, critic_cache = forward(agent.critic, np.concatenate([states, actions], axis=1))
    from replaykit.nn import backward

    _, d_input = backward(agent.critic, critic_cache, np.full((4, 1), -0.25))
    analytic, _ = backward(agent.actor, actor_cache, d_input[:, -1:])

    h = 1e-6
    for p, a in zip(agent.actor.weights + agent.actor.biases,
                    analytic.weights + analytic.biases):
        it = np.nditer(p, flags=["multi_index"])
        checked = 0
        while not it.finished and checked < 8:
            idx = it.multi_index
            original = p[idx]
            p[idx] = original + h
            plus = objective()
            p[idx] = original - h
            minus = objective()
            p[idx] = original
            numeric = (plus - minus) / (2.0 * h)
            assert a[idx] == pytest.approx(numeric, rel=1e-4, abs=1e-8)
            checked += 1
            it.iternext()


def test_ddpg_actor_update_increases_critic_value() -> None:
    # critic Q(s, a) = a: ascending it must raise the mean action
    agent = make_ddpg(actor_lr=1e-2)
    agent.critic.weights[:] = []  # replaced below
    agent.critic = Mlp(
        (4, 1), "tanh", "identity", 1.0,
        [np.array([[0.0], [0.0], [0.0], [1.0]])], [np.zeros(1)],
    )
    rng = np.random.default_rng(13)
    states = rng.normal(size=(16, 3))
    transitions = [
        Transition(s, np.array([0.0]), 0.0, s, False) for s in states
    ]
    before = float(np.mean(forward(agent.actor, states)[0]))
    for _ in range(5):
        agent.actor_update(transitions)
    after = float(np.mean(forward(agent.actor, states)[0]))
    assert after > before


def test_ddpg_actor_update_zero_critic_is_noop() -> None:
    agent = make_ddpg()
    for w in agent.critic.weights:
        w[...] = 0.0
    for b in agent.critic.biases:
        b[...] = 0.0
    transitions = random_transitions(4, discrete=False)
    before = [w.copy() for w in agent.actor.weights]
    agent.actor_update(transitions)
    for b_, a in zip(before, agent.actor.weights):
        assert np.array_equal(b_, a)


def test_ddpg_soft_sync_small_tau_small_move() -> None:
    agent = make_ddpg(tau=0.001)
    target_before = [w.copy() for w in agent.critic_target.weights]
    agent.sync_targets()
    for before, after, online in zip(
        target_before, agent.critic_target.weights, agent.critic.weights
    ):
        assert np.allclose(after, 0.999 * before + 0.001 * online)


def test_ddpg_update_runs_full_cycle() -> None:
    agent = make_ddpg()
    transitions = random_transitions(8, discrete=False, done_rate=0.1)
    td = agent.update(transitions, np.ones(8))
    assert td.shape == (8,)
    assert np.all(np.isfinite(td))


def test_ddpg_rejects_asymmetric_bounds() -> None:
    with pytest.raises(ConfigurationError):
        DdpgAgent(3, 1, -1.0, 2.0, DdpgConfig(), identity_scaler(3),
                  np.random.default_rng(0))


def test_agent_config_validation() -> None:
    with pytest.raises(ConfigurationError):
        DqnConfig(gamma=1.5)
    with pytest.raises(ConfigurationError):
        DqnConfig(epsilon_start=0.1, epsilon_end=0.5)
    with pytest.raises(ConfigurationError):
        DdpgConfig(tau=0.0)
    with pytest.raises(ConfigurationError):
        DdpgConfig(ou_theta=0.0)
