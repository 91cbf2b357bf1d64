"""Experiment harness: wires environments, agents, and replay
strategies together and runs deterministic training loops.

A run is fully described by a :class:`RunConfig` plus nothing else.
The seed is split into independent streams (environment, network init,
exploration, replay sampling, evaluation), so enabling one strategy
never perturbs the random draws of another part of the system, and a
(config, seed) pair reproduces its CSV byte for byte.

Per-record wall-clock capture is off by default for exactly that
reason, mirroring how reproducible builds zero their timestamps; flip
``timing`` on to profile at the cost of CSV reproducibility. Total
runtime is always reported in the run manifest.
"""

from __future__ import annotations

import math
import os
import time
from dataclasses import dataclass, field, fields, replace

import numpy as np

from .agents import (
    DdpgAgent,
    DdpgConfig,
    DqnAgent,
    DqnConfig,
    ObservationScaler,
    OUNoise,
    epsilon_schedule,
    scaler_for,
)
from .envs import BoxAction, DiscreteActions, EnvSpec, env_spec, make_env
from .errors import ConfigurationError
from .hindsight import (
    Episode,
    GoalSpec,
    augment_observation,
    goal_spec_for,
    relabeled_transitions,
)
from .nn import forward, load_checkpoint, save_checkpoint
from .prioritized import PerConfig, PrioritizedSampler
from .replay import (
    Batch,
    ReplayBuffer,
    Transition,
    rows_to_batch,
    sample_combined,
    sample_uniform,
)

CSV_HEADER = "episode,train_reward,eval_mean,eval_std,steps,wallclock_ms"

# Stream indices for seed splitting.
_STREAMS = ("env", "init", "explore", "sample")
_EVAL_TAG = 0x45564131  # distinct entropy word for evaluation rngs


def _parse_bool(raw: str) -> bool:
    lowered = raw.strip().lower()
    if lowered in ("true", "1", "yes"):
        return True
    if lowered in ("false", "0", "no"):
        return False
    raise ConfigurationError(f"expected a boolean, got {raw!r}")


def _parse_int(raw: str) -> int:
    try:
        return int(raw.strip())
    except ValueError:
        raise ConfigurationError(f"expected an integer, got {raw!r}") from None


def _parse_float(raw: str) -> float:
    try:
        return float(raw.strip())
    except ValueError:
        raise ConfigurationError(f"expected a number, got {raw!r}") from None


def _parse_opt_int(raw: str) -> int | None:
    stripped = raw.strip().lower()
    return None if stripped in ("", "none", "auto") else _parse_int(raw)


def _parse_opt_float(raw: str) -> float | None:
    stripped = raw.strip().lower()
    return None if stripped in ("", "none", "auto") else _parse_float(raw)


def _parse_sizes(raw: str) -> tuple[int, ...]:
    parts = [p for p in raw.replace(",", " ").split() if p]
    if not parts:
        raise ConfigurationError(f"expected layer sizes, got {raw!r}")
    return tuple(_parse_int(p) for p in parts)


_TOP_KEYS = {
    "env": str,
    "agent": str,
    "combined": _parse_bool,
    "prioritized": _parse_bool,
    "hindsight": _parse_bool,
    "seed": _parse_int,
    "episodes": _parse_int,
    "eval_interval": _parse_int,
    "eval_episodes": _parse_int,
    "buffer_capacity": _parse_opt_int,
    "goal_tolerance": _parse_opt_float,
    "timing": _parse_bool,
}

_DQN_KEYS = {
    "gamma": _parse_float,
    "epsilon_start": _parse_float,
    "epsilon_end": _parse_float,
    "epsilon_decay_steps": _parse_int,
    "target_update_period": _parse_int,
    "batch_size": _parse_int,
    "learning_rate": _parse_float,
    "warmup": _parse_int,
    "hidden_sizes": _parse_sizes,
}

_DDPG_KEYS = {
    "gamma": _parse_float,
    "tau": _parse_float,
    "actor_lr": _parse_float,
    "critic_lr": _parse_float,
    "batch_size": _parse_int,
    "warmup": _parse_int,
    "ou_theta": _parse_float,
    "ou_sigma": _parse_float,
    "ou_mu": _parse_float,
    "hidden_sizes": _parse_sizes,
}

_PER_KEYS = {
    "alpha": _parse_float,
    "beta": _parse_float,
    "epsilon": _parse_float,
    "max_priority": _parse_float,
}


@dataclass(frozen=True)
class RunConfig:
    """Everything that defines a run, flat-file serializable.

    ``buffer_capacity`` and ``goal_tolerance`` default to None meaning
    "resolve from the agent/environment defaults" (50k transitions for
    DQN, 100k for DDPG; the environment's goal tolerance).
    """

    env: str = "cartpole"
    agent: str = "dqn"
    combined: bool = False
    prioritized: bool = False
    hindsight: bool = False
    seed: int = 0
    episodes: int = 500
    eval_interval: int = 50
    eval_episodes: int = 100
    buffer_capacity: int | None = None
    goal_tolerance: float | None = None
    timing: bool = False
    dqn: DqnConfig = field(default_factory=DqnConfig)
    ddpg: DdpgConfig = field(default_factory=DdpgConfig)
    per: PerConfig = field(default_factory=PerConfig)

    def __post_init__(self) -> None:
        if self.seed < 0 or self.seed >= 2**64:
            raise ConfigurationError(f"seed must fit in u64, got {self.seed}")
        if self.episodes < 0:
            raise ConfigurationError(f"episodes must be >= 0, got {self.episodes}")
        if self.eval_interval < 1 or self.eval_episodes < 1:
            raise ConfigurationError("eval_interval and eval_episodes must be >= 1")
        if self.buffer_capacity is not None and self.buffer_capacity < 1:
            raise ConfigurationError("buffer_capacity must be >= 1 when given")

    def resolved_buffer_capacity(self) -> int:
        if self.buffer_capacity is not None:
            return self.buffer_capacity
        return 100_000 if self.agent == "ddpg" else 50_000

    def strategy_name(self) -> str:
        parts = []
        if self.combined:
            parts.append("c")
        if self.hindsight:
            parts.append("h")
        if self.prioritized:
            parts.append("p")
        return "".join(parts) + "er" if parts else "baseline"


def config_from_mapping(mapping: dict[str, str], base: RunConfig | None = None) -> RunConfig:
    """Build a RunConfig from flat key=value strings, starting from
    ``base`` (or defaults). Nested hyperparameters use the prefixes
    dqn_, ddpg_, and per_."""
    cfg = base or RunConfig()
    top: dict[str, object] = {}
    nested: dict[str, dict[str, object]] = {"dqn": {}, "ddpg": {}, "per": {}}
    tables = {"dqn": _DQN_KEYS, "ddpg": _DDPG_KEYS, "per": _PER_KEYS}
    for key, raw in mapping.items():
        if key in _TOP_KEYS:
            top[key] = _TOP_KEYS[key](raw)
            continue
        prefix, _, rest = key.partition("_")
        if prefix in tables and rest in tables[prefix]:
            nested[prefix][rest] = tables[prefix][rest](raw)
            continue
        raise ConfigurationError(f"unknown config key {key!r}")
    for name, overrides in nested.items():
        if overrides:
            top[name] = replace(getattr(cfg, name), **overrides)
    return replace(cfg, **top)


def config_to_mapping(cfg: RunConfig) -> dict[str, str]:
    """Flatten a RunConfig to strings; inverse of config_from_mapping."""

    def render(value) -> str:
        if value is None:
            return ""
        if isinstance(value, bool):
            return "true" if value else "false"
        if isinstance(value, tuple):
            return ",".join(str(v) for v in value)
        if isinstance(value, float):
            return repr(value)
        return str(value)

    out: dict[str, str] = {}
    for key in _TOP_KEYS:
        out[key] = render(getattr(cfg, key))
    for prefix, sub in (("dqn", cfg.dqn), ("ddpg", cfg.ddpg), ("per", cfg.per)):
        for f in fields(sub):
            out[f"{prefix}_{f.name}"] = render(getattr(sub, f.name))
    return out


def parse_config_file(path) -> dict[str, str]:
    """Read flat key=value lines; blank lines and # comments ignored."""
    mapping: dict[str, str] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            stripped = line.strip()
            if not stripped or stripped.startswith("#"):
                continue
            if "=" not in stripped:
                raise ConfigurationError(
                    f"{path}:{lineno}: expected key=value, got {stripped!r}"
                )
            key, _, value = stripped.partition("=")
            mapping[key.strip()] = value.strip()
    return mapping


class ReplayStack:
    """Base ring buffer with optional prioritized sampling and optional
    forced inclusion of the newest transition (combined replay)."""

    def __init__(
        self,
        capacity: int,
        combined: bool,
        per_config: PerConfig | None,
        rng: np.random.Generator,
    ) -> None:
        self.buffer = ReplayBuffer(capacity)
        self.combined = combined
        self.per = PrioritizedSampler(capacity, per_config) if per_config else None
        self.rng = rng

    def __len__(self) -> int:
        return len(self.buffer)

    def append(self, transition: Transition) -> int:
        index = self.buffer.append(transition)
        if self.per is not None:
            self.per.insert(index)
        return index

    def sample(self, batch_size: int) -> Batch:
        inner = self.per.sample if self.per is not None else sample_uniform
        if self.combined:
            rows = sample_combined(self.buffer, batch_size, inner, self.rng)
        else:
            rows = inner(self.buffer, batch_size, self.rng)
        return rows_to_batch(rows)

    def update_priorities(self, indices, td_errors) -> None:
        if self.per is not None:
            self.per.update_priorities(indices, td_errors)


@dataclass
class TrainRecord:
    """Per-episode summary row. ``eval_mean`` / ``eval_std`` carry the
    most recent frozen-policy evaluation (NaN before the first one)."""

    episode: int
    train_reward: float
    eval_mean: float
    eval_std: float
    steps: int
    wallclock_ms: int


@dataclass
class Experiment:
    """A fully wired run, ready for :func:`train`."""

    config: RunConfig
    env: object
    spec: EnvSpec
    agent: object
    stack: ReplayStack
    goal_spec: GoalSpec | None
    scaler: ObservationScaler
    env_rng: np.random.Generator
    explore_rng: np.random.Generator
    noise: OUNoise | None

    @property
    def native_goal(self) -> np.ndarray | None:
        if self.goal_spec is None:
            return None
        return np.asarray(self.goal_spec.native_goal)


def validate_config(cfg: RunConfig) -> None:
    """Reject impossible (env, agent, strategy) combinations with the
    conflicting pair named."""
    try:
        spec = env_spec(cfg.env)
    except ValueError as exc:
        raise ConfigurationError(str(exc)) from None
    if cfg.agent not in ("dqn", "ddpg"):
        raise ConfigurationError(f"unknown agent {cfg.agent!r}; choose dqn or ddpg")
    if isinstance(spec.actions, BoxAction) and cfg.agent == "dqn":
        raise ConfigurationError(
            f"agent 'dqn' cannot drive env '{cfg.env}': continuous actions"
        )
    if isinstance(spec.actions, DiscreteActions) and cfg.agent == "ddpg":
        raise ConfigurationError(
            f"agent 'ddpg' cannot drive env '{cfg.env}': discrete actions"
        )
    if cfg.hindsight and cfg.env == "cartpole":
        raise ConfigurationError(
            "strategy 'hindsight' is unsupported on env 'cartpole': no goal space"
        )


def build_run(cfg: RunConfig) -> Experiment:
    """Construct environment, agent, and replay stack from a config."""
    validate_config(cfg)
    spec = env_spec(cfg.env)
    goal_spec = goal_spec_for(cfg.env, cfg.goal_tolerance) if cfg.hindsight else None
    scaler = scaler_for(spec, goal_spec)
    streams = np.random.SeedSequence(cfg.seed).spawn(len(_STREAMS))
    rngs = {name: np.random.default_rng(ss) for name, ss in zip(_STREAMS, streams)}
    obs_dim = spec.obs_dim + (goal_spec.goal_dim if goal_spec else 0)
    if cfg.agent == "dqn":
        assert isinstance(spec.actions, DiscreteActions)
        agent: object = DqnAgent(obs_dim, spec.actions.n, cfg.dqn, scaler, rngs["init"])
        noise = None
    else:
        assert isinstance(spec.actions, BoxAction)
        agent = DdpgAgent(
            obs_dim,
            spec.actions.dim,
            spec.actions.low,
            spec.actions.high,
            cfg.ddpg,
            scaler,
            rngs["init"],
        )
        noise = OUNoise(
            spec.actions.dim, cfg.ddpg.ou_theta, cfg.ddpg.ou_sigma, cfg.ddpg.ou_mu
        )
    stack = ReplayStack(
        capacity=cfg.resolved_buffer_capacity(),
        combined=cfg.combined,
        per_config=cfg.per if cfg.prioritized else None,
        rng=rngs["sample"],
    )
    return Experiment(
        config=cfg,
        env=make_env(cfg.env),
        spec=spec,
        agent=agent,
        stack=stack,
        goal_spec=goal_spec,
        scaler=scaler,
        env_rng=rngs["env"],
        explore_rng=rngs["explore"],
        noise=noise,
    )


def _greedy_policy(exp: Experiment):
    goal = exp.native_goal
    agent = exp.agent
    return lambda obs: agent.greedy_action(augment_observation(obs, goal))


def evaluate_policy(env, policy, episodes: int, rng: np.random.Generator) -> tuple[float, float]:
    """Mean and population std of total episode reward under a frozen
    policy with exploration disabled."""
    totals = np.empty(episodes)
    for i in range(episodes):
        obs = env.reset(rng)
        total = 0.0
        while True:
            result = env.step(policy(obs))
            total += result.reward
            obs = result.next_state
            if result.done or result.truncated:
                break
        totals[i] = total
    return float(totals.mean()), float(totals.std())


def _eval_rng(seed: int) -> np.random.Generator:
    # One fixed generator construction per evaluation round: every round
    # (and every strategy at the same seed) scores against the same
    # battery of start states, so eval curves are comparable and the
    # convergence check cannot flip on re-rolled starts.
    return np.random.default_rng([seed, _EVAL_TAG])


def train(exp: Experiment) -> list[TrainRecord]:
    """Run episodes until the limit or until a frozen-policy evaluation
    meets the environment's solve threshold.

    Each step: act, store, and once the warm-up count is met, draw one
    batch, apply one agent update, and feed the TD errors back to the
    priority sampler. Goal relabeling appends its extra transitions
    when the episode closes.
    """
    cfg = exp.config
    agent = exp.agent
    dqn = isinstance(agent, DqnAgent)
    agent_cfg = cfg.dqn if dqn else cfg.ddpg
    goal = exp.native_goal
    eval_env = make_env(cfg.env)
    policy = _greedy_policy(exp)
    records: list[TrainRecord] = []
    started = time.monotonic()
    env_steps = 0
    eval_mean = eval_std = math.nan
    for episode in range(1, cfg.episodes + 1):
        obs = exp.env.reset(exp.env_rng)
        if exp.noise is not None:
            exp.noise.reset()
        episode_log = Episode() if exp.goal_spec is not None else None
        episode_reward = 0.0
        while True:
            observation = augment_observation(obs, goal)
            if dqn:
                eps = epsilon_schedule(
                    agent_cfg.epsilon_start,
                    agent_cfg.epsilon_end,
                    agent_cfg.epsilon_decay_steps,
                    env_steps,
                )
                action = agent.act(observation, eps, exp.explore_rng)
            else:
                action = agent.act(observation, exp.noise, exp.explore_rng)
            result = exp.env.step(action)
            transition = Transition(
                state=obs,
                action=action,
                reward=result.reward,
                next_state=result.next_state,
                done=result.done,
                goal=goal,
            )
            exp.stack.append(transition)
            if episode_log is not None:
                episode_log.append(transition)
            env_steps += 1
            episode_reward += result.reward
            if len(exp.stack) >= agent_cfg.warmup:
                batch = exp.stack.sample(agent_cfg.batch_size)
                td_errors = agent.update(batch.transitions, batch.weights)
                exp.stack.update_priorities(batch.indices, td_errors)
            obs = result.next_state
            if result.done or result.truncated:
                break
        if episode_log is not None and len(episode_log) > 0:
            for extra in relabeled_transitions(episode_log, exp.goal_spec):
                exp.stack.append(extra)
        fresh_eval = episode % cfg.eval_interval == 0
        if fresh_eval:
            eval_mean, eval_std = evaluate_policy(
                eval_env, policy, cfg.eval_episodes, _eval_rng(cfg.seed)
            )
        wallclock = int((time.monotonic() - started) * 1000) if cfg.timing else 0
        records.append(
            TrainRecord(
                episode, float(episode_reward), eval_mean, eval_std, env_steps, wallclock
            )
        )
        if (
            fresh_eval
            and exp.spec.solve_reward is not None
            and eval_mean >= exp.spec.solve_reward
        ):
            break
    return records


def check_convergence(records: list[TrainRecord], spec: EnvSpec) -> int | None:
    """Episode of the first evaluation meeting the solve threshold, or
    None when the task has no threshold or no evaluation met it."""
    if spec.solve_reward is None:
        return None
    for record in records:
        if not math.isnan(record.eval_mean) and record.eval_mean >= spec.solve_reward:
            return record.episode
    return None


def emit_csv(records: list[TrainRecord], path) -> None:
    """Write records with a fixed header and fixed decimal formatting,
    so identical records always produce identical bytes."""
    lines = [CSV_HEADER]
    for r in records:
        lines.append(
            f"{r.episode},{r.train_reward:.6f},{r.eval_mean:.6f},"
            f"{r.eval_std:.6f},{r.steps},{r.wallclock_ms}"
        )
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def effective_mapping(cfg: RunConfig) -> dict[str, str]:
    """Config mapping with auto fields resolved to their final values."""
    mapping = config_to_mapping(cfg)
    mapping["buffer_capacity"] = str(cfg.resolved_buffer_capacity())
    if cfg.hindsight:
        tol = goal_spec_for(cfg.env, cfg.goal_tolerance).tolerance
        mapping["goal_tolerance"] = repr(tol)
    return mapping


def write_manifest(path, cfg: RunConfig, extra: dict[str, str] | None = None) -> None:
    mapping = dict(effective_mapping(cfg))
    mapping.update(extra or {})
    with open(path, "w", encoding="utf-8") as fh:
        for key in sorted(mapping):
            fh.write(f"{key}={mapping[key]}\n")


def _checkpoint_nets(agent) -> dict[str, object]:
    if isinstance(agent, DqnAgent):
        return {"q": agent.q}
    return {"actor": agent.actor, "critic": agent.critic}


def save_run_checkpoint(path, exp: Experiment) -> None:
    cfg = exp.config
    meta = {
        "env": cfg.env,
        "agent": cfg.agent,
        "hindsight": "true" if cfg.hindsight else "false",
        "goal_tolerance": repr(exp.goal_spec.tolerance) if exp.goal_spec else "",
    }
    save_checkpoint(path, _checkpoint_nets(exp.agent), meta)


def evaluate_checkpoint(path, episodes: int, seed: int = 0) -> tuple[float, float]:
    """Reload a checkpoint and run frozen-policy evaluation episodes."""
    nets, meta = load_checkpoint(path)
    env_name = meta["env"]
    agent_kind = meta["agent"]
    hindsight = meta.get("hindsight") == "true"
    goal = None
    if hindsight:
        tol = meta.get("goal_tolerance") or None
        gspec = goal_spec_for(env_name, float(tol) if tol else None)
        goal = np.asarray(gspec.native_goal)
        scaler = scaler_for(env_spec(env_name), gspec)
    else:
        scaler = scaler_for(env_spec(env_name))
    if agent_kind == "dqn":
        q = nets["q"]

        def policy(obs):
            values, _ = forward(q, scaler(augment_observation(obs, goal)))
            return int(np.argmax(values))

    elif agent_kind == "ddpg":
        actor = nets["actor"]
        spec = env_spec(env_name)
        assert isinstance(spec.actions, BoxAction)

        def policy(obs):
            action, _ = forward(actor, scaler(augment_observation(obs, goal)))
            return np.clip(action, spec.actions.low, spec.actions.high)

    else:
        raise ConfigurationError(f"checkpoint has unknown agent {agent_kind!r}")
    return evaluate_policy(
        make_env(env_name), policy, episodes, np.random.default_rng([seed, _EVAL_TAG])
    )


def run_to_dir(cfg: RunConfig, out_dir) -> dict[str, object]:
    """Train one run and write run.csv, manifest.txt, checkpoint.txt.

    Returns a small result summary (records, convergence episode,
    file paths).
    """
    os.makedirs(out_dir, exist_ok=True)
    exp = build_run(cfg)
    started = time.monotonic()
    records = train(exp)
    total_ms = int((time.monotonic() - started) * 1000)
    converged = check_convergence(records, exp.spec)
    csv_path = os.path.join(out_dir, "run.csv")
    manifest_path = os.path.join(out_dir, "manifest.txt")
    checkpoint_path = os.path.join(out_dir, "checkpoint.txt")
    emit_csv(records, csv_path)
    write_manifest(
        manifest_path,
        cfg,
        extra={
            "converged_at": "" if converged is None else str(converged),
            "total_wallclock_ms": str(total_ms),
        },
    )
    save_run_checkpoint(checkpoint_path, exp)
    return {
        "records": records,
        "converged_at": converged,
        "csv": csv_path,
        "manifest": manifest_path,
        "checkpoint": checkpoint_path,
    }


# Sweep order mirrors the usual strategy-combination tables.
SWEEP_STRATEGIES: tuple[tuple[str, bool, bool, bool], ...] = (
    # name, combined, hindsight, prioritized
    ("baseline", False, False, False),
    ("cer", True, False, False),
    ("per", False, False, True),
    ("her", False, True, False),
    ("cper", True, False, True),
    ("cher", True, True, False),
    ("hper", False, True, True),
    ("chper", True, True, True),
)

UNSUPPORTED = "unsupported"
NO_CONVERGENCE = "no-convergence-within-limit"
CONVERGED = "converged"


def sweep(cfg: RunConfig, out_dir) -> list[tuple[str, str, int | None]]:
    """Run every strategy combination for one (env, agent, seed).

    Combinations the environment cannot support are reported as
    ``unsupported`` rather than silently skipped; runs that finish the
    episode budget without meeting the solve threshold (or whose env
    has none) report ``no-convergence-within-limit``.
    """
    validate_config(cfg)
    os.makedirs(out_dir, exist_ok=True)
    rows: list[tuple[str, str, int | None]] = []
    for name, combined, hindsight, prioritized in SWEEP_STRATEGIES:
        combo = replace(
            cfg, combined=combined, hindsight=hindsight, prioritized=prioritized
        )
        try:
            validate_config(combo)
        except ConfigurationError:
            rows.append((name, UNSUPPORTED, None))
            continue
        result = run_to_dir(combo, os.path.join(out_dir, name))
        converged = result["converged_at"]
        if converged is None:
            rows.append((name, NO_CONVERGENCE, None))
        else:
            rows.append((name, CONVERGED, converged))
    summary = os.path.join(out_dir, "summary.csv")
    with open(summary, "w", encoding="ascii", newline="\n") as fh:
        fh.write("strategy,status,episodes_to_convergence\n")
        for name, status, episode in rows:
            fh.write(f"{name},{status},{'' if episode is None else episode}\n")
    return rows
