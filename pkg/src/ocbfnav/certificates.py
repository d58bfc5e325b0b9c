"""Observation-space barrier (CBF) and Lyapunov (CLF) certificates.

h(o) = head(max_i enc(o_i)) - min_i |o_i| + d_c      (h <= 0 safe, h >= 0 unsafe)
V(rho, phi) = net(rho, sin phi, cos phi) + rho^2 + (1 - cos phi) / 2
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import nn
from .geometry import LidarScan

HIDDEN = 48
FEATURES = 48


@dataclass
class CertificateModel:
    encoder: nn.Mlp  # 2 -> 48 -> 48 -> 48
    barrier_head: nn.Mlp  # 48 -> 48 -> 48 -> 1
    lyapunov: nn.Mlp  # 3 -> 48 -> 48 -> 1
    d_c: float = 0.2
    alpha_h: float = 0.9
    alpha_V: float = 0.93
    n_rays: int = 32
    seed: int = 0

    def __post_init__(self):
        if self.encoder.n_in != 2 or self.encoder.n_out != self.barrier_head.n_in:
            raise nn.ShapeError("encoder must map 2 -> barrier head input")
        if self.barrier_head.n_out != 1 or self.lyapunov.sizes[0] != 3 or self.lyapunov.n_out != 1:
            raise nn.ShapeError("barrier head must be ->1 and lyapunov net 3->1")
        if not (0.0 <= self.alpha_h < 1.0 and 0.0 <= self.alpha_V < 1.0):
            raise ValueError("decay rates must lie in [0, 1)")

    @classmethod
    def init(cls, seed: int = 0, d_c: float = 0.2, alpha_h: float = 0.9, alpha_V: float = 0.93,
             n_rays: int = 32) -> "CertificateModel":
        """Random encoder; both scalar heads start with a zero output layer so the
        initial certificates equal their geometric priors."""
        rng = np.random.default_rng(seed)
        return cls(
            encoder=nn.Mlp.init([2, HIDDEN, HIDDEN, FEATURES], rng),
            barrier_head=nn.Mlp.init([FEATURES, HIDDEN, HIDDEN, 1], rng, zero_output=True),
            lyapunov=nn.Mlp.init([3, HIDDEN, HIDDEN, 1], rng, zero_output=True),
            d_c=d_c, alpha_h=alpha_h, alpha_V=alpha_V, n_rays=n_rays, seed=seed,
        )

    @classmethod
    def prior_only(cls, d_c: float = 0.2, alpha_h: float = 0.9, alpha_V: float = 0.93,
                   n_rays: int = 32) -> "CertificateModel":
        """All networks zero: h and V reduce exactly to their distance priors."""
        return cls(
            nn.Mlp.zeros([2, HIDDEN, HIDDEN, FEATURES]),
            nn.Mlp.zeros([FEATURES, HIDDEN, HIDDEN, 1]),
            nn.Mlp.zeros([3, HIDDEN, HIDDEN, 1]),
            d_c=d_c, alpha_h=alpha_h, alpha_V=alpha_V, n_rays=n_rays,
        )

    def nets(self):
        return self.encoder, self.barrier_head, self.lyapunov

    def copy(self) -> "CertificateModel":
        return CertificateModel(self.encoder.copy(), self.barrier_head.copy(), self.lyapunov.copy(),
                                self.d_c, self.alpha_h, self.alpha_V, self.n_rays, self.seed)

    # checkpoint ---------------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "format": "ocbfnav-certificates",
            "version": 1,
            "metadata": {
                "n_rays": self.n_rays, "d_c": self.d_c, "alpha_h": self.alpha_h,
                "alpha_V": self.alpha_V, "seed": self.seed,
            },
            "encoder": self.encoder.to_dict(),
            "barrier_head": self.barrier_head.to_dict(),
            "lyapunov": self.lyapunov.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CertificateModel":
        m = d["metadata"]
        return cls(
            nn.Mlp.from_dict(d["encoder"]), nn.Mlp.from_dict(d["barrier_head"]),
            nn.Mlp.from_dict(d["lyapunov"]), d_c=float(m["d_c"]), alpha_h=float(m["alpha_h"]),
            alpha_V=float(m["alpha_V"]), n_rays=int(m["n_rays"]), seed=int(m["seed"]),
        )

    def save(self, path) -> None:
        # json writes floats with repr, which round-trips float64 exactly
        Path(path).write_text(json.dumps(self.to_dict(), sort_keys=True) + "\n")

    @classmethod
    def load(cls, path) -> "CertificateModel":
        return cls.from_dict(json.loads(Path(path).read_text()))


def _points(scan) -> np.ndarray:
    return scan.points if isinstance(scan, LidarScan) else np.asarray(scan, dtype=float)


def encode_points(model: CertificateModel, points) -> np.ndarray:
    """Feature of point sets (..., n, 2) -> (..., 48)."""
    return nn.forward(model.encoder, points).max(axis=-2)


def encode(model: CertificateModel, scan) -> np.ndarray:
    pts = _points(scan)
    if pts.shape[0] == 0:
        raise ValueError("cannot encode an empty scan")
    return encode_points(model, pts)


def cbf_values(model: CertificateModel, points) -> np.ndarray:
    """Barrier value for point sets (..., n, 2) -> (...)."""
    pts = np.asarray(points, dtype=float)
    feat = encode_points(model, pts)
    learned = nn.forward(model.barrier_head, feat)[..., 0]
    dmin = np.sqrt(np.min(pts[..., 0] ** 2 + pts[..., 1] ** 2, axis=-1))
    return learned - dmin + model.d_c


def cbf_value(model: CertificateModel, scan) -> float:
    return float(cbf_values(model, _points(scan)))


def clf_inputs(rho, phi) -> np.ndarray:
    rho = np.asarray(rho, dtype=float)
    phi = np.asarray(phi, dtype=float)
    return np.stack([rho, np.sin(phi), np.cos(phi)], axis=-1)


def clf_prior(rho, phi):
    return np.asarray(rho) ** 2 + (1.0 - np.cos(phi)) / 2.0


def clf_values(model: CertificateModel, rho, phi) -> np.ndarray:
    learned = nn.forward(model.lyapunov, clf_inputs(rho, phi))[..., 0]
    return learned + clf_prior(rho, phi)


def clf_value(model: CertificateModel, rho: float, phi: float) -> float:
    if rho < 0:
        raise ValueError("range to goal must be nonnegative")
    return float(clf_values(model, rho, phi))
