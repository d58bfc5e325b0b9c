"""Randomised obstacle fields and the bug-trap scene."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geometry import Box, Circle, Environment, Pose, signed_distance


class RejectionBudgetExceeded(RuntimeError):
    """Could not place obstacles while keeping start and goal clear."""


@dataclass(frozen=True)
class EnvConfig:
    size: float = 4.0
    n_obstacles: int = 8
    circle_radius: tuple = (0.2, 0.3)
    box_half: tuple = (0.15, 0.3)
    circle_fraction: float = 0.5
    start_goal_distance: tuple = (1.0, 2.0)
    border: float = 0.6  # start/goal keep this far from the walls
    clearance: float = 0.5  # start/goal keep this far from every obstacle
    walls: bool = True
    max_tries: int = 10_000


def _sample_endpoints(rng: np.random.Generator, cfg: EnvConfig):
    lo, hi = cfg.border, cfg.size - cfg.border
    for _ in range(cfg.max_tries):
        s = rng.uniform(lo, hi, size=2)
        g = rng.uniform(lo, hi, size=2)
        if cfg.start_goal_distance[0] <= np.hypot(*(g - s)) <= cfg.start_goal_distance[1]:
            return s, g
    raise RejectionBudgetExceeded("cannot place start and goal with the configured distance")


def random_env(seed: int, n_obstacles: int | None = None, cfg: EnvConfig = EnvConfig()) -> Environment:
    """Deterministic random environment; the robot starts facing the goal."""
    n = cfg.n_obstacles if n_obstacles is None else n_obstacles
    if n < 0:
        raise ValueError("n_obstacles must be >= 0")
    rng = np.random.default_rng(seed)
    s, g = _sample_endpoints(rng, cfg)
    ends = np.stack([s, g])
    obstacles = []
    tries = 0
    while len(obstacles) < n:
        tries += 1
        if tries > cfg.max_tries:
            raise RejectionBudgetExceeded(f"placed {len(obstacles)}/{n} obstacles")
        c = rng.uniform(0.0, cfg.size, size=2)
        if rng.random() < cfg.circle_fraction:
            ob = Circle((float(c[0]), float(c[1])), float(rng.uniform(*cfg.circle_radius)))
        else:
            hx, hy = rng.uniform(*cfg.box_half, size=2)
            ob = Box((float(c[0] - hx), float(c[1] - hy)), (float(c[0] + hx), float(c[1] + hy)))
        if np.min(signed_distance([ob], ends)) > cfg.clearance:
            obstacles.append(ob)
    heading = math.atan2(g[1] - s[1], g[0] - s[0])
    return Environment(
        obstacles=tuple(obstacles),
        bounds=Box((0.0, 0.0), (cfg.size, cfg.size)),
        start=Pose(float(s[0]), float(s[1]), heading),
        goal=(float(g[0]), float(g[1])),
        walls=cfg.walls,
    )


def bugtrap_env(mouth_x: float = 2.4, back_x: float = 3.2, y0: float = 2.6, y1: float = 3.4,
                thickness: float = 0.1, goal_gap: float = 0.4, start_inset: float = 0.1) -> Environment:
    """C-shaped trap opening away from the goal, robot inside facing the goal.

    The cavity spans [mouth_x, back_x] x [y0, y1]; the robot starts ``start_inset``
    inside the mouth and the goal lies ``goal_gap`` beyond the back wall.
    """
    t = thickness
    yc = 0.5 * (y0 + y1)
    obstacles = (
        Box((back_x, y0 - t), (back_x + t, y1 + t)),  # back wall, between robot and goal
        Box((mouth_x, y1), (back_x, y1 + t)),  # upper arm
        Box((mouth_x, y0 - t), (back_x, y0)),  # lower arm
    )
    return Environment(
        obstacles=obstacles,
        bounds=Box((0.0, 0.0), (6.0, 6.0)),
        start=Pose(mouth_x + start_inset, yc, 0.0),
        goal=(back_x + t + goal_gap, yc),
        walls=True,
    )
