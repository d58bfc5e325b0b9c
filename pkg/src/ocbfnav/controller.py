"""Hybrid goal-seeking / exploratory controller over a discretised input grid."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace
from typing import NamedTuple, Optional, Tuple

import numpy as np

from .certificates import CertificateModel
from .dynamics import ControlGrid, ControlInput, ZERO_INPUT, local_transforms
from .lookahead import CandidateEval, Observation, evaluate_candidates

LEAK = 0.001


class AllCandidatesExcluded(RuntimeError):
    """Every grid candidate has zero probability under the exploration policy."""


class Mode(str, enum.Enum):
    GOAL_SEEKING = "G"
    EXPLORATORY = "E"
    FAIL_SAFE = "F"


def relu(x):
    return np.maximum(x, 0.0)


def leaky_relu(x):
    return np.maximum(x, LEAK * x)


@dataclass(frozen=True)
class ControllerConfig:
    goal_lambdas: Tuple[float, float, float] = (0.01, 1.0, 1e3)
    explore_lambdas: Tuple[float, float, float] = (1e3, 1e3, -0.1)
    eps_h: float = 0.1
    gamma_V: float = 0.0
    gamma_h: float = 0.0
    dt: float = 0.1
    goal_radius: float = 0.2
    # use alpha_h (rather than 1 - alpha_h) in the exploration decay test
    unify_decay: bool = True
    # keep non-worsening candidates when lookahead error has left h outside the band
    band_recovery: bool = True
    # extra band width granted during recovery for scan-discretisation noise, capped at 1.25 eps_h
    recovery_tol: float = 0.02
    grid: ControlGrid = field(default_factory=ControlGrid.uniform)
    transforms: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.eps_h <= 0:
            raise ValueError("eps_h must be positive")
        if self.gamma_V < 0 or self.gamma_h < 0:
            raise ValueError("margins must be nonnegative")
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        object.__setattr__(self, "transforms", local_transforms(self.grid, self.dt))


def evaluate(model: CertificateModel, obs: Observation, cfg: ControllerConfig) -> CandidateEval:
    return evaluate_candidates(model, obs, cfg.transforms)


def goal_residuals(model: CertificateModel, ev: CandidateEval, cfg: ControllerConfig):
    """Margined CLF and CBF residuals per candidate (<= 0 means satisfied)."""
    res_V = ev.V_next - model.alpha_V * ev.V + cfg.gamma_V
    res_h = ev.h_next - model.alpha_h * ev.h + cfg.gamma_h
    return res_V, res_h


def goal_costs(model: CertificateModel, ev: CandidateEval, cfg: ControllerConfig) -> np.ndarray:
    l1, l2, l3 = cfg.goal_lambdas
    res_V, res_h = goal_residuals(model, ev, cfg)
    return l1 * cfg.grid.norms + l2 * relu(res_V) + l3 * relu(res_h)


def _pick(cost: np.ndarray, norms: np.ndarray, mask: np.ndarray) -> int:
    idx = np.flatnonzero(mask)
    order = np.lexsort((idx, norms[idx], cost[idx]))
    return int(idx[order[0]])


class GoalSeekingResult(NamedTuple):
    u: ControlInput
    clf_feasible: bool
    cbf_feasible: bool
    index: int = -1


def goal_seeking_action(model: CertificateModel, obs: Observation, cfg: ControllerConfig,
                        ev: Optional[CandidateEval] = None) -> GoalSeekingResult:
    """Penalty-method solve of the one-step CLF/CBF problem by exhaustive grid search.

    When some candidate meets both margined constraints the search is limited to
    those candidates, so an accepted action always satisfies the CLF decrease.
    """
    ev = ev if ev is not None else evaluate(model, obs, cfg)
    res_V, res_h = goal_residuals(model, ev, cfg)
    cost = goal_costs(model, ev, cfg)
    cbf_ok = res_h <= 0.0
    both_ok = cbf_ok & (res_V <= 0.0)
    mask = both_ok if both_ok.any() else np.ones(len(cost), dtype=bool)
    k = _pick(cost, cfg.grid.norms, mask)
    return GoalSeekingResult(cfg.grid[k], bool(both_ok.any()), bool(cbf_ok.any()), k)


def clf_greedy_action(model: CertificateModel, obs: Observation, cfg: ControllerConfig,
                      ev: Optional[CandidateEval] = None) -> ControlInput:
    """Relaxed-CLF baseline: plain penalty argmin, no margins, never switches mode."""
    ev = ev if ev is not None else evaluate(model, obs, cfg)
    l1, l2, l3 = cfg.goal_lambdas
    cost = (l1 * cfg.grid.norms + l2 * relu(ev.V_next - model.alpha_V * ev.V)
            + l3 * relu(ev.h_next - model.alpha_h * ev.h))
    return cfg.grid[_pick(cost, cfg.grid.norms, np.ones(len(cost), dtype=bool))]


def exploration_probabilities(model: CertificateModel, ev: CandidateEval, h0: float,
                              cfg: ControllerConfig) -> np.ndarray:
    """Normalised sampling distribution of the exploration policy over the grid."""
    l1, l2, l3 = cfg.explore_lambdas
    rate = model.alpha_h if cfg.unify_decay else 1.0 - model.alpha_h
    decay = ev.h_next - rate * ev.h
    band = np.abs(ev.h_next - h0)
    # lookahead error can leave the robot just outside the band; it may then keep
    # any candidate that does not move it further out
    width = cfg.eps_h
    if cfg.band_recovery:
        off = abs(ev.h - h0)
        width = max(cfg.eps_h, min(off + cfg.recovery_tol, 1.25 * cfg.eps_h), off + 1e-12)
    excluded = (decay >= 0.0) | (band >= width)
    if excluded.all():
        raise AllCandidatesExcluded("no candidate stays in the exploration band")
    v = cfg.grid.candidates[:, 0]
    energy = l1 * leaky_relu(decay) + l2 * leaky_relu(band - cfg.eps_h) + l3 * v * v
    logw = np.where(excluded, -np.inf, -energy)
    logw -= logw[~excluded].max()
    w = np.exp(logw)
    return w / w.sum()


def exploratory_action(model: CertificateModel, obs: Observation, h0: float,
                       cfg: ControllerConfig, rng: np.random.Generator,
                       ev: Optional[CandidateEval] = None) -> ControlInput:
    ev = ev if ev is not None else evaluate(model, obs, cfg)
    p = exploration_probabilities(model, ev, h0, cfg)
    return cfg.grid[_sample(p, rng)]


def _sample(p: np.ndarray, rng: np.random.Generator) -> int:
    # inverse-CDF draw; zero-probability entries can never be selected
    c = np.cumsum(p)
    k = int(np.searchsorted(c, rng.random() * c[-1], side="right"))
    k = min(k, len(p) - 1)
    while p[k] == 0.0:
        k -= 1
    return k


@dataclass(frozen=True)
class StepInfo:
    """Diagnostics of one controller tick (what the episode log records)."""

    mode: Mode
    h: float
    V: float
    h_next: float
    V_next: float
    clf_feasible: bool
    cbf_feasible: bool
    h0: Optional[float] = None
    V0: Optional[float] = None
    entered_goal_seeking: bool = False
    entered_exploration: bool = False
    exit_V0: Optional[float] = None  # V0 of the exploration episode just left


@dataclass(frozen=True)
class ControllerState:
    mode: Mode = Mode.GOAL_SEEKING
    h0: Optional[float] = None
    V0: Optional[float] = None
    rng: np.random.Generator = field(default_factory=lambda: np.random.default_rng(0))
    info: Optional[StepInfo] = None

    @classmethod
    def initial(cls, seed) -> "ControllerState":
        return cls(rng=np.random.default_rng(seed))


def hybrid_step(state: ControllerState, model: CertificateModel, obs: Observation,
                cfg: ControllerConfig, ev: Optional[CandidateEval] = None
                ) -> Tuple[ControlInput, ControllerState]:
    """One controller tick; ``ev`` may carry a candidate evaluation computed elsewhere."""
    if state.mode is Mode.FAIL_SAFE:
        return ZERO_INPUT, state

    ev = ev if ev is not None else evaluate(model, obs, cfg)
    gs = goal_seeking_action(model, obs, cfg, ev)
    mode, h0, V0 = state.mode, state.h0, state.V0
    entered_g = entered_e = False
    exit_V0 = None

    def fail() -> Tuple[ControlInput, ControllerState]:
        info = StepInfo(Mode.FAIL_SAFE, ev.h, ev.V, ev.h, ev.V, gs.clf_feasible, gs.cbf_feasible,
                        h0, V0, entered_g, entered_e, exit_V0)
        return ZERO_INPUT, replace(state, mode=Mode.FAIL_SAFE, info=info)

    if not gs.cbf_feasible:
        return fail()

    if mode is Mode.EXPLORATORY and ev.V <= model.alpha_V * V0:
        mode, entered_g, exit_V0 = Mode.GOAL_SEEKING, True, V0

    if mode is Mode.GOAL_SEEKING:
        if gs.clf_feasible:
            k = gs.index
            info = StepInfo(mode, ev.h, ev.V, float(ev.h_next[k]), float(ev.V_next[k]), True, True,
                            None, None, entered_g, False, exit_V0)
            return gs.u, replace(state, mode=mode, h0=None, V0=None, info=info)
        mode, h0, V0, entered_e = Mode.EXPLORATORY, ev.h, ev.V, True

    try:
        p = exploration_probabilities(model, ev, h0, cfg)
    except AllCandidatesExcluded:
        return fail()
    k = _sample(p, state.rng)
    info = StepInfo(mode, ev.h, ev.V, float(ev.h_next[k]), float(ev.V_next[k]), gs.clf_feasible,
                    gs.cbf_feasible, h0, V0, entered_g, entered_e, exit_V0)
    return cfg.grid[k], replace(state, mode=mode, h0=h0, V0=V0, info=info)
