"""Planar rigid transforms, obstacle primitives and analytic Lidar ray casting."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence, Union

import numpy as np

WALL_THICKNESS = 0.1


def wrap_angle(a):
    """Wrap an angle (scalar or array) into (-pi, pi]."""
    w = np.mod(np.asarray(a, dtype=float) + np.pi, 2.0 * np.pi) - np.pi
    w = np.where(w <= -np.pi, w + 2.0 * np.pi, w)
    if np.ndim(w) == 0:
        return float(w)
    return w


@dataclass(frozen=True)
class Pose:
    x: float
    y: float
    theta: float

    def __post_init__(self):
        object.__setattr__(self, "theta", wrap_angle(self.theta))

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.theta])

    def as_transform(self) -> "Transform":
        return Transform(self.x, self.y, self.theta)

    @classmethod
    def from_transform(cls, t: "Transform") -> "Pose":
        return cls(t.dx, t.dy, t.dtheta)


@dataclass(frozen=True)
class Transform:
    """Rigid motion in SE(2): rotate by ``dtheta`` then translate by (dx, dy)."""

    dx: float
    dy: float
    dtheta: float

    def __post_init__(self):
        object.__setattr__(self, "dtheta", wrap_angle(self.dtheta))

    @classmethod
    def identity(cls) -> "Transform":
        return cls(0.0, 0.0, 0.0)

    def as_array(self) -> np.ndarray:
        return np.array([self.dx, self.dy, self.dtheta])


IDENTITY = Transform.identity()


def compose(a: Transform, b: Transform) -> Transform:
    """Return a∘b, i.e. apply(compose(a, b), p) == apply(a, apply(b, p))."""
    c, s = math.cos(a.dtheta), math.sin(a.dtheta)
    return Transform(
        a.dx + c * b.dx - s * b.dy,
        a.dy + s * b.dx + c * b.dy,
        a.dtheta + b.dtheta,
    )


def inverse(t: Transform) -> Transform:
    c, s = math.cos(t.dtheta), math.sin(t.dtheta)
    return Transform(-(c * t.dx + s * t.dy), s * t.dx - c * t.dy, -t.dtheta)


def apply(t: Transform, p) -> np.ndarray:
    """Rotate then translate point(s) ``p`` of shape (..., 2)."""
    p = np.asarray(p, dtype=float)
    c, s = math.cos(t.dtheta), math.sin(t.dtheta)
    x, y = p[..., 0], p[..., 1]
    return np.stack([c * x - s * y + t.dx, s * x + c * y + t.dy], axis=-1)


def apply_inverse_batch(transforms: np.ndarray, points: np.ndarray) -> np.ndarray:
    """Map points through the inverse of K transforms at once.

    transforms: (K, 3) rows of (dx, dy, dtheta); points: (..., 2).
    Returns (K, ..., 2).
    """
    transforms = np.asarray(transforms, dtype=float)
    points = np.asarray(points, dtype=float)
    extra = (1,) * (points.ndim - 1)
    dx = transforms[:, 0].reshape(-1, *extra)
    dy = transforms[:, 1].reshape(-1, *extra)
    c = np.cos(transforms[:, 2]).reshape(-1, *extra)
    s = np.sin(transforms[:, 2]).reshape(-1, *extra)
    qx = points[..., 0] - dx
    qy = points[..., 1] - dy
    return np.stack([c * qx + s * qy, -s * qx + c * qy], axis=-1)


# ---------------------------------------------------------------- obstacles


@dataclass(frozen=True)
class Circle:
    center: tuple
    radius: float

    kind = "circle"

    def to_dict(self) -> dict:
        return {"kind": "circle", "center": list(self.center), "radius": self.radius}


@dataclass(frozen=True)
class Box:
    """Axis-aligned box with corners ``lo`` (min) and ``hi`` (max)."""

    lo: tuple
    hi: tuple

    kind = "box"

    def to_dict(self) -> dict:
        return {"kind": "box", "min": list(self.lo), "max": list(self.hi)}

    def contains(self, p, margin: float = 0.0) -> bool:
        return (
            self.lo[0] + margin <= p[0] <= self.hi[0] - margin
            and self.lo[1] + margin <= p[1] <= self.hi[1] - margin
        )


Obstacle = Union[Circle, Box]


def obstacle_from_dict(d: dict) -> Obstacle:
    kind = d.get("kind")
    if kind == "circle":
        cx, cy = d["center"]
        return Circle((float(cx), float(cy)), float(d["radius"]))
    if kind == "box":
        return Box(tuple(float(v) for v in d["min"]), tuple(float(v) for v in d["max"]))
    raise ValueError(f"unknown obstacle kind {kind!r}")


@dataclass(frozen=True)
class Environment:
    obstacles: tuple
    bounds: Box
    start: Pose
    goal: tuple
    walls: bool = True

    def solid_obstacles(self) -> tuple:
        """Obstacles plus, when ``walls`` is set, four boxes enclosing the workspace."""
        if not self.walls:
            return tuple(self.obstacles)
        (x0, y0), (x1, y1) = self.bounds.lo, self.bounds.hi
        w = WALL_THICKNESS
        walls = (
            Box((x0 - w, y0 - w), (x1 + w, y0)),
            Box((x0 - w, y1), (x1 + w, y1 + w)),
            Box((x0 - w, y0), (x0, y1)),
            Box((x1, y0), (x1 + w, y1)),
        )
        return tuple(self.obstacles) + walls

    def to_dict(self) -> dict:
        return {
            "obstacles": [o.to_dict() for o in self.obstacles],
            "bounds": {"min": list(self.bounds.lo), "max": list(self.bounds.hi)},
            "start": {"x": self.start.x, "y": self.start.y, "theta": self.start.theta},
            "goal": list(self.goal),
            "walls": self.walls,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Environment":
        b = d["bounds"]
        s = d["start"]
        return cls(
            obstacles=tuple(obstacle_from_dict(o) for o in d["obstacles"]),
            bounds=Box(tuple(float(v) for v in b["min"]), tuple(float(v) for v in b["max"])),
            start=Pose(float(s["x"]), float(s["y"]), float(s["theta"])),
            goal=tuple(float(v) for v in d["goal"]),
            walls=bool(d.get("walls", True)),
        )

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")

    @classmethod
    def load(cls, path) -> "Environment":
        return cls.from_dict(json.loads(Path(path).read_text()))


def empty_environment(size: float = 6.0, start=None, goal=None, walls: bool = False) -> Environment:
    start = start if start is not None else Pose(1.0, size / 2, 0.0)
    goal = goal if goal is not None else (size - 1.0, size / 2)
    return Environment((), Box((0.0, 0.0), (size, size)), start, tuple(goal), walls)


# ---------------------------------------------------------------- distance


def signed_distance(obstacles: Sequence[Obstacle], points) -> np.ndarray:
    """Exact signed distance from point(s) (..., 2) to the union of obstacles.

    Negative inside an obstacle; +inf when there are no obstacles.
    """
    p = np.asarray(points, dtype=float)
    best = np.full(p.shape[:-1], np.inf)
    for ob in obstacles:
        if isinstance(ob, Circle):
            d = np.hypot(p[..., 0] - ob.center[0], p[..., 1] - ob.center[1]) - ob.radius
        else:
            cx = 0.5 * (ob.lo[0] + ob.hi[0])
            cy = 0.5 * (ob.lo[1] + ob.hi[1])
            hx = 0.5 * (ob.hi[0] - ob.lo[0])
            hy = 0.5 * (ob.hi[1] - ob.lo[1])
            qx = np.abs(p[..., 0] - cx) - hx
            qy = np.abs(p[..., 1] - cy) - hy
            outside = np.hypot(np.maximum(qx, 0.0), np.maximum(qy, 0.0))
            inside = np.minimum(np.maximum(qx, qy), 0.0)
            d = outside + inside
        best = np.minimum(best, d)
    return best


def clearance(env: Environment, point) -> float:
    return float(signed_distance(env.solid_obstacles(), point))


# ---------------------------------------------------------------- lidar


@dataclass(frozen=True)
class LidarScan:
    points: np.ndarray  # (n_rays, 2), robot frame
    saturated: np.ndarray = field(default=None)  # (n_rays,) bool

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float).reshape(-1, 2)
        object.__setattr__(self, "points", pts)
        if self.saturated is None:
            object.__setattr__(self, "saturated", np.zeros(len(pts), dtype=bool))
        else:
            object.__setattr__(self, "saturated", np.asarray(self.saturated, dtype=bool))

    @property
    def n_rays(self) -> int:
        return len(self.points)

    def ranges(self) -> np.ndarray:
        return np.hypot(self.points[:, 0], self.points[:, 1])


def ray_bearings(n_rays: int) -> np.ndarray:
    return 2.0 * np.pi * np.arange(n_rays) / n_rays


def _ray_hits(obstacles, ox, oy, dx, dy):
    """Distance along unit rays (origin ox, oy; direction dx, dy) to the first hit.

    All arguments broadcast together. A ray starting inside an obstacle hits at 0.
    """
    best = np.full(np.broadcast(ox, dx).shape, np.inf)
    with np.errstate(divide="ignore", invalid="ignore"):
        for ob in obstacles:
            if isinstance(ob, Circle):
                px = ox - ob.center[0]
                py = oy - ob.center[1]
                b = px * dx + py * dy
                c = px * px + py * py - ob.radius * ob.radius
                disc = b * b - c
                root = np.sqrt(np.maximum(disc, 0.0))
                near = -b - root
                # outside the circle both roots share a sign, so near < 0 means a miss
                t = np.where(c <= 0.0, 0.0, np.where((disc >= 0.0) & (near >= 0.0), near, np.inf))
            else:
                inv_x = 1.0 / dx
                inv_y = 1.0 / dy
                t1 = (ob.lo[0] - ox) * inv_x
                t2 = (ob.hi[0] - ox) * inv_x
                t3 = (ob.lo[1] - oy) * inv_y
                t4 = (ob.hi[1] - oy) * inv_y
                # rays parallel to a slab: inside the slab means unconstrained
                par_x = dx == 0.0
                par_y = dy == 0.0
                in_x = (ox >= ob.lo[0]) & (ox <= ob.hi[0])
                in_y = (oy >= ob.lo[1]) & (oy <= ob.hi[1])
                tx_min = np.where(par_x, np.where(in_x, -np.inf, np.inf), np.minimum(t1, t2))
                tx_max = np.where(par_x, np.where(in_x, np.inf, -np.inf), np.maximum(t1, t2))
                ty_min = np.where(par_y, np.where(in_y, -np.inf, np.inf), np.minimum(t3, t4))
                ty_max = np.where(par_y, np.where(in_y, np.inf, -np.inf), np.maximum(t3, t4))
                t_enter = np.maximum(tx_min, ty_min)
                t_exit = np.minimum(tx_max, ty_max)
                hit = (t_enter <= t_exit) & (t_exit >= 0.0)
                t = np.where(hit, np.maximum(t_enter, 0.0), np.inf)
            best = np.minimum(best, t)
    return best


def scan_ranges(obstacles, poses: np.ndarray, n_rays: int, d_o: float) -> np.ndarray:
    """Ranges for a batch of poses (P, 3) -> (P, n_rays), saturated at ``d_o``."""
    poses = np.atleast_2d(np.asarray(poses, dtype=float))
    bearings = ray_bearings(n_rays)
    ang = poses[:, 2:3] + bearings[None, :]
    dx, dy = np.cos(ang), np.sin(ang)
    ox = np.broadcast_to(poses[:, 0:1], dx.shape)
    oy = np.broadcast_to(poses[:, 1:2], dx.shape)
    t = _ray_hits(obstacles, ox, oy, dx, dy)
    return np.minimum(t, d_o)


def ranges_to_points(ranges: np.ndarray) -> np.ndarray:
    """(..., n_rays) ranges -> (..., n_rays, 2) robot-frame points."""
    n = ranges.shape[-1]
    b = ray_bearings(n)
    return np.stack([ranges * np.cos(b), ranges * np.sin(b)], axis=-1)


def raycast(env: Environment, pose: Pose, n_rays: int = 32, d_o: float = 3.0) -> LidarScan:
    if n_rays < 1 or d_o <= 0:
        raise ValueError("raycast needs n_rays >= 1 and d_o > 0")
    r = scan_ranges(env.solid_obstacles(), pose.as_array()[None, :], n_rays, d_o)[0]
    return LidarScan(ranges_to_points(r), r >= d_o)


def min_range(scan: LidarScan) -> float:
    return float(np.min(np.hypot(scan.points[:, 0], scan.points[:, 1])))
