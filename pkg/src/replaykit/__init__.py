"""Composable experience replay strategies with matching agents,
environments, and an experiment harness."""

from .agents import DdpgAgent, DdpgConfig, DqnAgent, DqnConfig, OUNoise
from .envs import env_names, env_spec, extract_achieved_goal, make_env
from .errors import (
    ConfigurationError,
    IntegrityError,
    NotReadyError,
    NumericalError,
    ReplayKitError,
    UnsupportedGoalError,
)
from .harness import (
    Experiment,
    ReplayStack,
    RunConfig,
    TrainRecord,
    build_run,
    check_convergence,
    emit_csv,
    run_to_dir,
    sweep,
    train,
)
from .hindsight import Episode, GoalSpec, goal_spec_for, relabel_episode
from .prioritized import PerConfig, PrioritizedSampler, SumTree
from .replay import Batch, ReplayBuffer, Transition, sample_combined, sample_uniform

__version__ = "0.1.0"

__all__ = [
    "Batch",
    "ConfigurationError",
    "DdpgAgent",
    "DdpgConfig",
    "DqnAgent",
    "DqnConfig",
    "Episode",
    "Experiment",
    "GoalSpec",
    "IntegrityError",
    "NotReadyError",
    "NumericalError",
    "OUNoise",
    "PerConfig",
    "PrioritizedSampler",
    "ReplayBuffer",
    "ReplayKitError",
    "ReplayStack",
    "RunConfig",
    "SumTree",
    "TrainRecord",
    "Transition",
    "UnsupportedGoalError",
    "build_run",
    "check_convergence",
    "emit_csv",
    "env_names",
    "env_spec",
    "extract_achieved_goal",
    "goal_spec_for",
    "make_env",
    "relabel_episode",
    "run_to_dir",
    "sample_combined",
    "sample_uniform",
    "sweep",
    "train",
]
