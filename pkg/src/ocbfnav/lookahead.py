"""One-step observation prediction by rigidly moving the current scan and goal."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Tuple

import numpy as np

from .certificates import CertificateModel, cbf_values, clf_values
from .dynamics import ControlInput, local_transform
from .geometry import LidarScan, Transform, apply, apply_inverse_batch, inverse, wrap_angle


@dataclass(frozen=True)
class Observation:
    scan: LidarScan
    rho: float
    phi: float

    def __post_init__(self):
        if self.rho < 0:
            raise ValueError("rho must be nonnegative")
        object.__setattr__(self, "phi", wrap_angle(self.phi))


def goal_observation(pose, goal) -> Tuple[float, float]:
    """Range and bearing of a world-frame goal seen from ``pose``."""
    gx, gy = goal[0] - pose.x, goal[1] - pose.y
    return math.hypot(gx, gy), wrap_angle(math.atan2(gy, gx) - pose.theta)


def predict_scan(scan: LidarScan, t: Transform) -> LidarScan:
    # saturated rays move like hits; the controller cannot know what lies beyond range
    return LidarScan(apply(inverse(t), scan.points), scan.saturated.copy())


def predict_goal(rho: float, phi: float, t: Transform) -> Tuple[float, float]:
    if rho < 0:
        raise ValueError("rho must be nonnegative")
    g = apply(inverse(t), np.array([rho * math.cos(phi), rho * math.sin(phi)]))
    return float(math.hypot(g[0], g[1])), wrap_angle(math.atan2(g[1], g[0]))


def predict_goal_batch(rho, phi, transforms: np.ndarray):
    """Vectorised goal update for K transforms -> (rho', phi') arrays of shape (K,)."""
    g = apply_inverse_batch(transforms, np.array([rho * math.cos(phi), rho * math.sin(phi)]))
    return np.hypot(g[..., 0], g[..., 1]), np.arctan2(g[..., 1], g[..., 0])


def predict_certificates(model: CertificateModel, obs: Observation, u: ControlInput,
                         dt: float) -> Tuple[float, float]:
    t = local_transform(u, dt)
    h_next = float(cbf_values(model, predict_scan(obs.scan, t).points))
    rho, phi = predict_goal(obs.rho, obs.phi, t)
    return h_next, float(clf_values(model, rho, phi))


@dataclass(frozen=True)
class CandidateEval:
    """Current and predicted certificate values for every grid candidate."""

    h: float
    V: float
    h_next: np.ndarray  # (K,)
    V_next: np.ndarray  # (K,)


def evaluate_candidates(model: CertificateModel, obs: Observation,
                        transforms: np.ndarray) -> CandidateEval:
    pts = apply_inverse_batch(transforms, obs.scan.points)  # (K, n, 2)
    h_next = cbf_values(model, pts)
    rho, phi = predict_goal_batch(obs.rho, obs.phi, transforms)
    V_next = clf_values(model, rho, phi)
    h = float(cbf_values(model, obs.scan.points))
    V = float(clf_values(model, obs.rho, obs.phi))
    # an identity motion leaves the observation unchanged, so its prediction is exact
    still = np.all(transforms == 0.0, axis=1)
    h_next[still] = h
    V_next[still] = V
    return CandidateEval(h, V, h_next, V_next)
