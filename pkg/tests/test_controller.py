import numpy as np
import pytest

from ocbfnav.controller import (AllCandidatesExcluded, ControllerConfig, ControllerState, Mode,
                                _sample, clf_greedy_action, evaluate, exploration_probabilities,
                                goal_seeking_action, hybrid_step)
from ocbfnav.dynamics import ZERO_INPUT
from ocbfnav.environments import bugtrap_env
from ocbfnav.geometry import Pose
from ocbfnav.lookahead import CandidateEval
from ocbfnav.simulate import SimConfig, observe

K = 105


def _ev(h, V, h_next, V_next):
    return CandidateEval(h, V, np.broadcast_to(np.asarray(h_next, float), (K,)).copy(),
                         np.broadcast_to(np.asarray(V_next, float), (K,)).copy())


def test_corridor_goal_seeking_moves_forward(prior_model, ctrl, corridor_env):
    obs = observe(corridor_env, Pose(3.0, 1.0, 0.0), SimConfig())
    ev = evaluate(prior_model, obs, ctrl)
    gs = goal_seeking_action(prior_model, obs, ctrl, ev)
    assert gs.clf_feasible and gs.cbf_feasible
    assert gs.u.v > 0
    assert ev.V_next[gs.index] <= prior_model.alpha_V * ev.V
    assert ev.h_next[gs.index] <= prior_model.alpha_h * ev.h


def test_goal_seeking_is_minimum_effort_feasible(prior_model, ctrl, corridor_env):
    obs = observe(corridor_env, Pose(3.0, 1.0, 0.0), SimConfig())
    ev = evaluate(prior_model, obs, ctrl)
    gs = goal_seeking_action(prior_model, obs, ctrl, ev)
    ok = (ev.V_next <= prior_model.alpha_V * ev.V) & (ev.h_next <= prior_model.alpha_h * ev.h)
    assert ctrl.grid.norms[gs.index] == ctrl.grid.norms[ok].min()


def test_wall_between_robot_and_goal_blocks_clf_only(prior_model, ctrl):
    env = bugtrap_env()
    obs = observe(env, Pose(2.9, 3.0, 0.0), SimConfig())  # 0.3 m short of the back wall
    gs = goal_seeking_action(prior_model, obs, ctrl)
    assert gs.cbf_feasible
    assert not gs.clf_feasible


def test_clf_greedy_never_violates_cbf_when_feasible(prior_model, ctrl):
    env = bugtrap_env()
    obs = observe(env, Pose(2.9, 3.0, 0.0), SimConfig())
    ev = evaluate(prior_model, obs, ctrl)
    u = clf_greedy_action(prior_model, obs, ctrl, ev)
    k = ctrl.grid.candidates.tolist().index([u.v, u.omega])
    assert ev.h_next[k] <= prior_model.alpha_h * ev.h


def test_decay_test_excludes_candidates(prior_model):
    cfg = ControllerConfig(unify_decay=False, band_recovery=False)
    h = -0.5
    rate = 1.0 - prior_model.alpha_h
    h_next = np.full(K, h)
    h_next[:10] = rate * h + 1e-3  # decay residual positive
    p = exploration_probabilities(prior_model, _ev(h, 1.0, h_next, 1.0), h, cfg)
    assert np.all(p[:10] == 0.0)
    assert np.all(p[10:] > 0.0)
    assert p.sum() == pytest.approx(1.0)


def test_band_test_excludes_candidates(prior_model):
    cfg = ControllerConfig(band_recovery=False)
    h0 = -0.5
    h_next = np.full(K, -0.5)
    h_next[5] = h0 - 1.01 * cfg.eps_h
    h_next[6] = h0 + 0.03
    p = exploration_probabilities(prior_model, _ev(h0, 1.0, h_next, 1.0), h0, cfg)
    assert p[5] == 0.0
    assert p[6] > 0.0


def test_exploration_near_uniform_over_admissible(prior_model, ctrl):
    h0 = -0.5
    p = exploration_probabilities(prior_model, _ev(h0, 1.0, h0, 1.0), h0, ctrl)
    v = ctrl.grid.candidates[:, 0]
    # only the small speed bonus separates candidates
    assert p.max() / p.min() == pytest.approx(np.exp(0.1 * v.max() ** 2), rel=1e-12)


def test_all_excluded_raises(prior_model, ctrl):
    with pytest.raises(AllCandidatesExcluded):
        exploration_probabilities(prior_model, _ev(-0.5, 1.0, 0.5, 1.0), -0.5, ctrl)


def test_sample_skips_zero_probability():
    p = np.zeros(K)
    p[[3, 50]] = 0.5
    rng = np.random.default_rng(0)
    assert {_sample(p, rng) for _ in range(500)} == {3, 50}


def test_switch_to_exploration_and_back(prior_model, ctrl):
    state = ControllerState.initial(0)
    # CBF satisfiable, CLF not: goal-seeking must hand over to exploration
    u, state = hybrid_step(state, prior_model, None, ctrl, _ev(-0.5, 2.0, -0.5, 2.5))
    assert state.mode is Mode.EXPLORATORY
    assert state.info.entered_exploration
    assert (state.h0, state.V0) == (-0.5, 2.0)
    # V has not yet dropped by alpha_V: stay exploring
    _, state = hybrid_step(state, prior_model, None, ctrl, _ev(-0.5, 1.9, -0.5, 2.5))
    assert state.mode is Mode.EXPLORATORY
    # V = 1.7 <= 0.93 * 2.0 and some candidate decreases V: resume goal seeking
    _, state = hybrid_step(state, prior_model, None, ctrl, _ev(-0.5, 1.7, -0.5, 1.5))
    assert state.mode is Mode.GOAL_SEEKING
    assert state.info.entered_goal_seeking and state.info.exit_V0 == 2.0
    assert state.h0 is None and state.V0 is None


def test_fail_safe_is_absorbing(prior_model, ctrl):
    state = ControllerState.initial(0)
    u, state = hybrid_step(state, prior_model, None, ctrl, _ev(-0.5, 1.0, 0.0, 0.5))
    assert state.mode is Mode.FAIL_SAFE and u == ZERO_INPUT
    for _ in range(3):
        u, state2 = hybrid_step(state, prior_model, None, ctrl, _ev(-0.5, 1.0, -0.5, 0.5))
        assert u == ZERO_INPUT and state2 is state


def test_fail_safe_when_all_exploration_excluded(prior_model, ctrl):
    state = ControllerState.initial(0)
    _, state = hybrid_step(state, prior_model, None, ctrl, _ev(-0.5, 2.0, -0.5, 2.5))
    h_next = np.full(K, -0.9)  # CBF-feasible, but every candidate leaves the band
    u, state = hybrid_step(state, prior_model, None, ctrl, _ev(-0.5, 2.0, h_next, 2.5))
    assert state.mode is Mode.FAIL_SAFE and u == ZERO_INPUT


def test_selected_action_respects_certificates(random_model, ctrl):
    env = bugtrap_env()
    rng = np.random.default_rng(4)
    for i in range(60):
        pose = Pose(rng.uniform(2.55, 3.1), rng.uniform(2.8, 3.2), rng.uniform(-np.pi, np.pi))
        obs = observe(env, pose, SimConfig())
        ev = evaluate(random_model, obs, ctrl)
        state = ControllerState(mode=Mode.EXPLORATORY if i % 2 else Mode.GOAL_SEEKING,
                                h0=ev.h if i % 2 else None, V0=1e9 if i % 2 else None,
                                rng=np.random.default_rng(i))
        u, state = hybrid_step(state, random_model, obs, ctrl, ev)
        info = state.info
        if info.mode is Mode.GOAL_SEEKING:
            assert info.h_next <= random_model.alpha_h * info.h
            assert info.V_next <= random_model.alpha_V * info.V
        elif info.mode is Mode.EXPLORATORY:
            assert info.h_next < random_model.alpha_h * info.h
            assert abs(info.h_next - info.h0) < ctrl.eps_h


def test_same_seed_same_actions(random_model, ctrl, corridor_env):
    obs = observe(corridor_env, corridor_env.start, SimConfig())
    ev = evaluate(random_model, obs, ctrl)
    runs = []
    for _ in range(2):
        state = ControllerState(mode=Mode.EXPLORATORY, h0=ev.h, V0=1e9, rng=np.random.default_rng(7))
        seq = []
        for _ in range(20):
            u, state = hybrid_step(state, random_model, obs, ctrl, ev)
            seq.append(u)
        runs.append(seq)
    assert runs[0] == runs[1]
