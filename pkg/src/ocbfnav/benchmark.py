"""Randomised-environment benchmark, bug-trap trials, latency and trace invariant checks."""

from __future__ import annotations

import json
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np

from .certificates import CertificateModel
from .controller import ControllerConfig, ControllerState, hybrid_step
from .environments import EnvConfig, bugtrap_env, random_env
from .geometry import Environment, Pose
from .lookahead import CandidateEval, Observation, evaluate_candidates
from .simulate import EpisodeLog, SimConfig, observe, run_episode


@dataclass
class EpisodeOutcome:
    env_seed: Optional[int]
    outcome: str
    outcome_time: Optional[float]
    n_steps: int

    def to_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass
class BenchmarkReport:
    n_envs: int
    policy: str
    safety_rate: float
    goal_rate: float
    mean_time_to_goal: Optional[float]  # over episodes that reached the goal
    outcomes: List[EpisodeOutcome]
    median_latency_ms: Optional[float] = None
    mean_latency_ms: Optional[float] = None

    def to_dict(self, timing: bool = False) -> dict:
        """Deterministic content only, unless ``timing`` adds the wall-clock figures."""
        d = {
            "format": "ocbfnav-benchmark", "version": 1, "n_envs": self.n_envs,
            "policy": self.policy, "safety_rate": self.safety_rate, "goal_rate": self.goal_rate,
            "mean_time_to_goal": self.mean_time_to_goal,
            "outcomes": [o.to_dict() for o in self.outcomes],
        }
        if timing:
            d["median_latency_ms"] = self.median_latency_ms
            d["mean_latency_ms"] = self.mean_latency_ms
        return d

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")

    def summary_table(self) -> str:
        counts = {k: 0 for k in ("reached_goal", "collided", "timeout", "fail_safe")}
        for o in self.outcomes:
            counts[o.outcome] += 1
        rows = [
            ("policy", self.policy),
            ("episodes", str(self.n_envs)),
            ("safety rate", f"{self.safety_rate:.3f}"),
            ("goal rate", f"{self.goal_rate:.3f}"),
            ("mean time to goal [s]", "-" if self.mean_time_to_goal is None else f"{self.mean_time_to_goal:.2f}"),
        ]
        rows += [(f"  {k}", str(v)) for k, v in counts.items()]
        if self.median_latency_ms is not None:
            rows += [("median step latency [ms]", f"{self.median_latency_ms:.2f}"),
                     ("mean step latency [ms]", f"{self.mean_latency_ms:.2f}")]
        width = max(len(k) for k, _ in rows)
        return "\n".join(f"{k:<{width}}  {v:>10}" for k, v in rows)


def aggregate(logs: Sequence[EpisodeLog], policy: str = "hybrid") -> BenchmarkReport:
    """Rates from episode logs; logs are ordered by env seed first so the result
    does not depend on the order in which episodes finished."""
    if not logs:
        raise ValueError("no episodes to aggregate")
    logs = sorted(logs, key=lambda g: (g.env_seed is None, g.env_seed if g.env_seed is not None else 0))
    n = len(logs)
    goals = [g.outcome_time for g in logs if g.reached_goal]
    lat = [x for g in logs for x in g.latencies_ms]
    return BenchmarkReport(
        n_envs=n, policy=policy,
        safety_rate=sum(not g.collided for g in logs) / n,
        goal_rate=len(goals) / n,
        mean_time_to_goal=math.fsum(goals) / len(goals) if goals else None,
        outcomes=[EpisodeOutcome(g.env_seed, g.outcome, g.outcome_time, len(g.steps)) for g in logs],
        median_latency_ms=float(np.median(lat)) if lat else None,
        mean_latency_ms=float(np.mean(lat)) if lat else None,
    )


def run_episodes(jobs: Sequence[Callable[[], EpisodeLog]], workers: int = 1) -> List[EpisodeLog]:
    if workers <= 1:
        return [job() for job in jobs]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda job: job(), jobs))


def benchmark(model: CertificateModel, n_envs: int, base_seed: int = 0,
              sim: SimConfig = SimConfig(), ctrl: ControllerConfig = ControllerConfig(),
              env_cfg: EnvConfig = EnvConfig(), policy: str = "hybrid", workers: int = 1,
              on_episode: Optional[Callable[[EpisodeLog], None]] = None) -> tuple:
    """Run ``policy`` on random_env(base_seed + i) for i < n_envs.

    Episode i uses controller seed base_seed + i. Returns (report, logs).
    """
    if n_envs < 1:
        raise ValueError("n_envs must be >= 1")

    def job(seed):
        def run():
            log = run_episode(policy, random_env(seed, cfg=env_cfg), model, ctrl, sim, seed=seed,
                              env_seed=seed)
            if on_episode is not None:
                on_episode(log)
            return log
        return run

    logs = run_episodes([job(base_seed + i) for i in range(n_envs)], workers)
    return aggregate(logs, policy), logs


BUGTRAP_TIME = 60.0


def bugtrap_trials(model: CertificateModel, n: int = 20, base_seed: int = 0, policy: str = "hybrid",
                   sim: SimConfig = SimConfig(max_time=BUGTRAP_TIME),
                   ctrl: ControllerConfig = ControllerConfig(), workers: int = 1) -> tuple:
    """Repeated bug-trap episodes with controller seeds base_seed + i; returns (report, logs)."""
    env = bugtrap_env()
    jobs = [lambda s=base_seed + i: run_episode(policy, env, model, ctrl, sim, seed=s, env_seed=s)
            for i in range(n)]
    logs = run_episodes(jobs, workers)
    return aggregate(logs, policy), logs


# ------------------------------------------------------------------ latency


def evaluate_candidates_parallel(model: CertificateModel, obs: Observation, transforms: np.ndarray,
                                 pool: ThreadPoolExecutor, n_chunks: int) -> CandidateEval:
    """Candidate scoring split into ``n_chunks`` slices scored on ``pool``."""
    parts = np.array_split(np.arange(len(transforms)), n_chunks)
    evs = list(pool.map(lambda idx: evaluate_candidates(model, obs, transforms[idx]), parts))
    return CandidateEval(evs[0].h, evs[0].V, np.concatenate([e.h_next for e in evs]),
                         np.concatenate([e.V_next for e in evs]))


@dataclass
class LatencyReport:
    serial_median_ms: float
    serial_mean_ms: float
    parallel_median_ms: float
    parallel_mean_ms: float
    workers: int
    n_steps: int

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def measure_latency(model: CertificateModel, observations: Sequence[Observation],
                    ctrl: ControllerConfig = ControllerConfig(), workers: int = 4,
                    seed: int = 0) -> LatencyReport:
    """Wall-clock time of one controller tick, serial and with threaded candidate scoring."""
    if not observations:
        raise ValueError("need observations to time")
    serial = []
    state = ControllerState.initial(seed)
    for obs in observations:
        t0 = time.perf_counter()
        _, state = hybrid_step(state, model, obs, ctrl)
        serial.append(1e3 * (time.perf_counter() - t0))
        if state.mode.value == "F":
            state = ControllerState.initial(seed)

    par = []
    state = ControllerState.initial(seed)
    with ThreadPoolExecutor(max_workers=workers) as pool:
        for obs in observations:
            t0 = time.perf_counter()
            ev = evaluate_candidates_parallel(model, obs, ctrl.transforms, pool, workers)
            _, state = hybrid_step(state, model, obs, ctrl, ev)
            par.append(1e3 * (time.perf_counter() - t0))
            if state.mode.value == "F":
                state = ControllerState.initial(seed)
    return LatencyReport(float(np.median(serial)), float(np.mean(serial)), float(np.median(par)),
                         float(np.mean(par)), workers, len(observations))


def collect_observations(env: Environment, logs: Sequence[EpisodeLog], sim: SimConfig,
                         limit: int = 500) -> List[Observation]:
    out = []
    for log in logs:
        for s in log.steps:
            out.append(observe(env, Pose(*s.pose), sim))
            if len(out) >= limit:
                return out
    return out


# ------------------------------------------------------------------ trace invariants


@dataclass
class TraceCheck:
    """Violation counts of the four logged-trace invariants of the hybrid controller."""

    goal_seeking_decrease: int = 0  # predicted V_{t+1} <= alpha_V V_t in goal-seeking steps
    exploration_exit: int = 0  # V <= alpha_V V0 when leaving exploration
    sequence_bound: int = 0  # V over cumulative goal-seeking steps <= V(t0) alpha_V^k
    exploration_band: int = 0  # |h_t - h0| < eps_h + slack while exploring
    messages: List[str] = field(default_factory=list)

    @property
    def total(self) -> int:
        return (self.goal_seeking_decrease + self.exploration_exit + self.sequence_bound
                + self.exploration_band)

    def __iadd__(self, other: "TraceCheck") -> "TraceCheck":
        for k in ("goal_seeking_decrease", "exploration_exit", "sequence_bound", "exploration_band"):
            setattr(self, k, getattr(self, k) + getattr(other, k))
        self.messages += other.messages
        return self


def check_trace(log: EpisodeLog, alpha_V: float, eps_h: float, band_slack: Optional[float] = None,
                rtol: float = 1e-9) -> TraceCheck:
    """Count invariant violations in one episode log.

    ``rtol`` absorbs floating-point noise between the predicted goal vector and
    the one observed at the next tick.
    """
    slack = eps_h / 2 if band_slack is None else band_slack
    out = TraceCheck()
    steps = log.steps
    if not steps:
        return out

    def tol(v):
        return rtol * max(1.0, abs(v))

    V_t0 = steps[0].V
    k = 0
    for i, s in enumerate(steps):
        where = f"env {log.env_seed} t={s.t:.1f}"
        if s.mode == "G":
            if s.V_next > alpha_V * s.V + tol(s.V):
                out.goal_seeking_decrease += 1
                out.messages.append(f"{where}: V_next {s.V_next:.6g} > alpha_V V {alpha_V * s.V:.6g}")
            if s.V > V_t0 * alpha_V ** k + tol(V_t0):
                out.sequence_bound += 1
                out.messages.append(f"{where}: V {s.V:.6g} above sequence bound after {k} steps")
            k += 1
            if s.entered_goal_seeking:
                if s.exit_V0 is None or s.V > alpha_V * s.exit_V0 + tol(s.exit_V0):
                    out.exploration_exit += 1
                    out.messages.append(f"{where}: left exploration with V {s.V:.6g}, V0 {s.exit_V0}")
        elif s.mode == "E":
            if abs(s.h - s.h0) >= eps_h + slack:
                out.exploration_band += 1
                out.messages.append(f"{where}: |h - h0| = {abs(s.h - s.h0):.4f} outside band")
    return out


def check_traces(logs: Sequence[EpisodeLog], alpha_V: float, eps_h: float,
                 band_slack: Optional[float] = None, safe_only: bool = True) -> TraceCheck:
    total = TraceCheck()
    for log in logs:
        if safe_only and log.collided:
            continue
        total += check_trace(log, alpha_V, eps_h, band_slack)
    return total


def save_logs(logs: Sequence[EpisodeLog], path) -> None:
    with open(path, "w") as f:
        for log in sorted(logs, key=lambda g: g.env_seed or 0):
            f.write(log.to_jsonl())


def load_logs(path) -> List[EpisodeLog]:
    """Inverse of :func:`save_logs` (episodes are separated by their header records)."""
    text = Path(path).read_text().splitlines()
    chunks: List[List[str]] = []
    for line in text:
        if not line.strip():
            continue
        if json.loads(line)["record"] == "episode":
            chunks.append([])
        chunks[-1].append(line)
    return [EpisodeLog.from_jsonl("\n".join(c)) for c in chunks]
