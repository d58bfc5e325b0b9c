"""Discrete-time Dubins car with exact arc integration."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geometry import Pose, Transform

STRAIGHT_EPS = 1e-9


@dataclass(frozen=True)
class ControlInput:
    v: float
    omega: float

    @property
    def norm(self) -> float:
        return math.hypot(self.v, self.omega)


ZERO_INPUT = ControlInput(0.0, 0.0)


@dataclass(frozen=True)
class ControlGrid:
    """Finite set of candidate inputs, stored as a (K, 2) array of (v, omega)."""

    candidates: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.candidates, dtype=float).reshape(-1, 2)
        c.setflags(write=False)
        object.__setattr__(self, "candidates", c)

    @classmethod
    def uniform(cls, v_max: float = 0.5, omega_max: float = 3.0, n_v: int = 7, n_omega: int = 15):
        if n_v < 2 or n_omega < 1:
            raise ValueError("grid needs n_v >= 2 and n_omega >= 1")
        vs = np.linspace(0.0, v_max, n_v)
        ws = np.linspace(-omega_max, omega_max, n_omega) if n_omega > 1 else np.zeros(1)
        if n_omega % 2 == 0:
            # keep the zero turn rate available
            ws = np.sort(np.append(ws, 0.0))
        vv, ww = np.meshgrid(vs, ws, indexing="ij")
        return cls(np.stack([vv.ravel(), ww.ravel()], axis=1))

    def __len__(self) -> int:
        return len(self.candidates)

    def __getitem__(self, k: int) -> ControlInput:
        v, w = self.candidates[k]
        return ControlInput(float(v), float(w))

    @property
    def norms(self) -> np.ndarray:
        return np.hypot(self.candidates[:, 0], self.candidates[:, 1])

    def zero_index(self) -> int:
        return int(np.flatnonzero(self.norms == 0.0)[0])


def _arc(v, omega, dt):
    """Displacement (dx, dy, dtheta) of an arc started at the origin facing +x."""
    v = np.asarray(v, dtype=float)
    omega = np.asarray(omega, dtype=float)
    straight = np.abs(omega) < STRAIGHT_EPS
    dth = omega * dt
    w_safe = np.where(straight, 1.0, omega)
    dx = np.where(straight, v * dt, v / w_safe * np.sin(dth))
    dy = np.where(straight, 0.0, v / w_safe * (1.0 - np.cos(dth)))
    return dx, dy, np.where(straight, 0.0, dth)


def dubins_step(pose: Pose, u: ControlInput, dt: float) -> Pose:
    if dt <= 0:
        raise ValueError("dt must be positive")
    dx, dy, dth = (float(a) for a in _arc(u.v, u.omega, dt))
    c, s = math.cos(pose.theta), math.sin(pose.theta)
    return Pose(pose.x + c * dx - s * dy, pose.y + s * dx + c * dy, pose.theta + dth)


def local_transform(u: ControlInput, dt: float) -> Transform:
    """Motion over ``dt`` expressed in the robot's current frame; needs no state."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    dx, dy, dth = (float(a) for a in _arc(u.v, u.omega, dt))
    return Transform(dx, dy, dth)


def local_transforms(grid: ControlGrid, dt: float) -> np.ndarray:
    """(K, 3) local transforms for every grid candidate."""
    dx, dy, dth = _arc(grid.candidates[:, 0], grid.candidates[:, 1], dt)
    return np.stack([dx, dy, dth], axis=1)
