"""Closed-loop episodes: 10 Hz zero-order-hold control over 100 Hz exact-arc simulation."""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from .certificates import CertificateModel
from .controller import (ControllerConfig, ControllerState, Mode, StepInfo, clf_greedy_action,
                         evaluate, goal_seeking_action, hybrid_step)
from .dynamics import dubins_step
from .geometry import Environment, Pose, clearance, min_range, raycast
from .lookahead import Observation, goal_observation

POLICIES = ("hybrid", "clf_greedy")


@dataclass(frozen=True)
class SimConfig:
    n_rays: int = 32
    d_o: float = 3.0
    substeps: int = 10
    max_time: float = 10.0


@dataclass
class StepRecord:
    t: float
    pose: tuple
    u: tuple
    mode: str
    h: float
    V: float
    h_next: float
    V_next: float
    clf_feasible: bool
    cbf_feasible: bool
    min_range: float
    clearance: float
    rho: float
    h0: Optional[float] = None
    V0: Optional[float] = None
    entered_goal_seeking: bool = False
    entered_exploration: bool = False
    exit_V0: Optional[float] = None

    def to_dict(self) -> dict:
        d = dict(self.__dict__)
        d["pose"] = list(self.pose)
        d["u"] = list(self.u)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "StepRecord":
        d = dict(d)
        d["pose"] = tuple(d["pose"])
        d["u"] = tuple(d["u"])
        return cls(**d)


@dataclass
class EpisodeLog:
    steps: List[StepRecord]
    outcome: str  # "reached_goal" | "collided" | "timeout" | "fail_safe"
    outcome_time: Optional[float]
    env_seed: Optional[int] = None
    policy: str = "hybrid"
    final_pose: tuple = ()
    latencies_ms: List[float] = field(default_factory=list)  # wall clock; never serialised

    @property
    def reached_goal(self) -> bool:
        return self.outcome == "reached_goal"

    @property
    def collided(self) -> bool:
        return self.outcome == "collided"

    def header(self) -> dict:
        return {
            "record": "episode", "outcome": self.outcome, "outcome_time": self.outcome_time,
            "env_seed": self.env_seed, "policy": self.policy, "final_pose": list(self.final_pose),
            "n_steps": len(self.steps),
        }

    def to_jsonl(self) -> str:
        lines = [json.dumps(self.header(), sort_keys=True)]
        lines += [json.dumps({"record": "step", **s.to_dict()}, sort_keys=True) for s in self.steps]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_jsonl(cls, text: str) -> "EpisodeLog":
        rows = [json.loads(line) for line in text.splitlines() if line.strip()]
        head = rows[0]
        steps = []
        for r in rows[1:]:
            r.pop("record")
            steps.append(StepRecord.from_dict(r))
        return cls(steps, head["outcome"], head["outcome_time"], head["env_seed"], head["policy"],
                   tuple(head["final_pose"]))


def observe(env: Environment, pose: Pose, sim: SimConfig) -> Observation:
    rho, phi = goal_observation(pose, env.goal)
    return Observation(raycast(env, pose, sim.n_rays, sim.d_o), rho, phi)


def run_episode(policy: str, env: Environment, model: CertificateModel, ctrl: ControllerConfig,
                sim: SimConfig = SimConfig(), seed=0, env_seed: Optional[int] = None) -> EpisodeLog:
    """Roll out one episode. Collisions use exact geometry, never the scan."""
    if policy not in POLICIES:
        raise ValueError(f"unknown policy {policy!r}")
    pose = env.start
    state = ControllerState.initial(seed)
    steps: List[StepRecord] = []
    latencies: List[float] = []
    n_ticks = int(round(sim.max_time / ctrl.dt))
    sub_dt = ctrl.dt / sim.substeps

    def finish(outcome, t):
        return EpisodeLog(steps, outcome, t, env_seed, policy,
                          (pose.x, pose.y, pose.theta), latencies)

    d0 = clearance(env, (pose.x, pose.y))
    if d0 <= model.d_c:
        return finish("collided", 0.0)

    for tick in range(n_ticks):
        t = tick * ctrl.dt
        obs = observe(env, pose, sim)
        if obs.rho <= ctrl.goal_radius:
            return finish("reached_goal", t)
        t0 = time.perf_counter()
        if policy == "hybrid":
            u, state = hybrid_step(state, model, obs, ctrl)
            info = state.info
        else:
            ev = evaluate(model, obs, ctrl)
            u = clf_greedy_action(model, obs, ctrl, ev)
            k = ctrl.grid.candidates.tolist().index([u.v, u.omega])
            gs = goal_seeking_action(model, obs, ctrl, ev)
            info = StepInfo(Mode.GOAL_SEEKING, ev.h, ev.V, float(ev.h_next[k]),
                            float(ev.V_next[k]), gs.clf_feasible, gs.cbf_feasible)
        latencies.append(1e3 * (time.perf_counter() - t0))
        steps.append(StepRecord(
            t=t, pose=(pose.x, pose.y, pose.theta), u=(u.v, u.omega), mode=info.mode.value,
            h=info.h, V=info.V, h_next=info.h_next, V_next=info.V_next,
            clf_feasible=info.clf_feasible, cbf_feasible=info.cbf_feasible,
            min_range=min_range(obs.scan), clearance=clearance(env, (pose.x, pose.y)),
            rho=obs.rho, h0=info.h0, V0=info.V0,
            entered_goal_seeking=info.entered_goal_seeking,
            entered_exploration=info.entered_exploration, exit_V0=info.exit_V0,
        ))
        if info.mode is Mode.FAIL_SAFE:
            return finish("fail_safe", t)
        for sub in range(sim.substeps):
            pose = dubins_step(pose, u, sub_dt)
            ts = t + (sub + 1) * sub_dt
            if clearance(env, (pose.x, pose.y)) <= model.d_c:
                return finish("collided", ts)
            if np.hypot(env.goal[0] - pose.x, env.goal[1] - pose.y) <= ctrl.goal_radius:
                return finish("reached_goal", ts)
    return finish("timeout", sim.max_time)
