"""Safe Lidar navigation with learned observation-space barrier and Lyapunov certificates."""

from .benchmark import BenchmarkReport, benchmark, bugtrap_trials, check_traces, measure_latency
from .certificates import CertificateModel, cbf_value, clf_value
from .config import ConfigError, RunConfig, load_config
from .controller import (AllCandidatesExcluded, ControllerConfig, ControllerState, Mode,
                         exploratory_action, goal_seeking_action, hybrid_step)
from .dynamics import ControlGrid, ControlInput, dubins_step
from .environments import EnvConfig, bugtrap_env, random_env
from .geometry import Box, Circle, Environment, LidarScan, Pose, Transform, raycast
from .lookahead import Observation, predict_certificates, predict_goal, predict_scan
from .simulate import EpisodeLog, SimConfig, run_episode
from .training import FeasibilityReport, TrainConfig, certificate_loss, train, verify

__version__ = "0.1.0"

__all__ = [
    "AllCandidatesExcluded", "BenchmarkReport", "Box", "CertificateModel", "Circle", "ConfigError",
    "ControlGrid", "ControlInput", "ControllerConfig", "ControllerState", "EnvConfig", "Environment",
    "EpisodeLog", "FeasibilityReport", "LidarScan", "Mode", "Observation", "Pose", "RunConfig",
    "SimConfig", "TrainConfig", "Transform", "benchmark", "bugtrap_env", "bugtrap_trials",
    "cbf_value", "certificate_loss", "check_traces", "clf_value", "dubins_step",
    "exploratory_action", "goal_seeking_action", "hybrid_step", "load_config", "measure_latency",
    "predict_certificates", "predict_goal", "predict_scan", "random_env", "raycast", "run_episode",
    "train", "verify",
]
