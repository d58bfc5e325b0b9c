import math
from collections import deque

import numpy as np
import pytest

from ocbfnav.environments import EnvConfig, RejectionBudgetExceeded, bugtrap_env, random_env
from ocbfnav.geometry import Box, Circle, clearance, signed_distance


def _free_path_exists(env, margin, cell=0.05):
    """Breadth-first search on a grid of cells whose centres keep ``margin`` clearance."""
    (x0, y0), (x1, y1) = env.bounds.lo, env.bounds.hi
    xs = np.arange(x0 + cell / 2, x1, cell)
    ys = np.arange(y0 + cell / 2, y1, cell)
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    free = signed_distance(env.solid_obstacles(), np.stack([X, Y], -1)) > margin

    def idx(p):
        return int((p[0] - x0) // cell), int((p[1] - y0) // cell)

    start, goal = idx((env.start.x, env.start.y)), idx(env.goal)
    seen = {start}
    queue = deque([start])
    while queue:
        c = queue.popleft()
        if c == goal:
            return True
        for d in ((1, 0), (-1, 0), (0, 1), (0, -1)):
            n = (c[0] + d[0], c[1] + d[1])
            if 0 <= n[0] < len(xs) and 0 <= n[1] < len(ys) and free[n] and n not in seen:
                seen.add(n)
                queue.append(n)
    return False


def test_random_env_deterministic():
    assert random_env(17).to_dict() == random_env(17).to_dict()
    assert random_env(17).to_dict() != random_env(18).to_dict()


def test_random_env_constraints():
    cfg = EnvConfig()
    for seed in range(500):
        env = random_env(seed)
        assert len(env.obstacles) == 8
        s, g = (env.start.x, env.start.y), env.goal
        assert 1.0 <= math.dist(s, g) <= 2.0
        for p in (s, g):
            assert cfg.border <= p[0] <= cfg.size - cfg.border
            assert cfg.border <= p[1] <= cfg.size - cfg.border
            assert signed_distance(env.obstacles, p) > cfg.clearance
        assert math.isclose(env.start.theta, math.atan2(g[1] - s[1], g[0] - s[0]))
        for ob in env.obstacles:
            if isinstance(ob, Circle):
                assert 0.2 <= ob.radius <= 0.3
            else:
                for k in range(2):
                    assert 0.3 <= ob.hi[k] - ob.lo[k] <= 0.6


def test_obstacle_count_override_and_validation():
    assert len(random_env(3, n_obstacles=0).obstacles) == 0
    assert len(random_env(3, n_obstacles=12).obstacles) == 12
    with pytest.raises(ValueError):
        random_env(3, n_obstacles=-1)


def test_rejection_budget():
    with pytest.raises(RejectionBudgetExceeded):
        random_env(0, cfg=EnvConfig(clearance=10.0, max_tries=50))


def test_bugtrap_blocks_straight_line():
    env = bugtrap_env()
    s = np.array([env.start.x, env.start.y])
    g = np.array(env.goal)
    line = s + np.linspace(0.0, 1.0, 400)[:, None] * (g - s)
    assert np.min(signed_distance(env.obstacles, line)) < 0.0
    assert env.start.theta == 0.0 and g[0] > s[0]  # facing the goal, into the trap


def test_bugtrap_start_and_goal_clear():
    env = bugtrap_env()
    assert clearance(env, (env.start.x, env.start.y)) > 0.2
    assert clearance(env, env.goal) > 0.2
    assert all(isinstance(ob, Box) for ob in env.obstacles)


def test_bugtrap_is_solvable():
    assert _free_path_exists(bugtrap_env(), margin=0.2)
