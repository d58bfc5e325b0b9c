"""Dataset generation, certificate loss with the relaxed goal-seeking cost, SGD, verification."""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import List, Optional, Sequence

import numpy as np

from . import nn
from .certificates import CertificateModel, cbf_values, clf_inputs, clf_prior
from .controller import ControllerConfig, goal_costs, relu
from .geometry import (Environment, LidarScan, Pose, apply_inverse_batch, ranges_to_points,
                       scan_ranges, signed_distance)
from .lookahead import CandidateEval, Observation, evaluate_candidates

log = logging.getLogger(__name__)

SAFE, UNSAFE, BOUNDARY = "safe", "unsafe", "boundary"
_LABEL_CODE = {SAFE: 0, UNSAFE: 1, BOUNDARY: 2}


class TrainingDiverged(RuntimeError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    n_samples: int = 10_000
    validation_fraction: float = 0.1
    epochs: int = 72
    a1: float = 100.0
    a2: float = 100.0
    a3: float = 1.0
    eps_h: float = 0.02  # classification margin
    # CLF shape terms: a_pos * ReLU(pos_floor * rho^2 - V) per sample, a_pos * V(goal)^2 per batch
    a_pos: float = 100.0
    pos_floor: float = 1.0
    # lookahead consistency: a_cons * (h_sigma(predicted scan) - h_sigma(scan))^2 at the goal argmin
    a_cons: float = 1000.0
    # one-sided a_probe * min(0, dip)^2 at the worst of n_probes random candidates per sample
    a_probe: float = 0.0
    n_probes: int = 0
    l2: float = 1e-4
    lr: float = 1e-3
    batch: int = 64
    label_margin: float = 0.05
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.validation_fraction < 1.0:
            raise ValueError("validation_fraction must lie in (0, 1)")
        if min(self.a1, self.a2, self.a3) <= 0 or self.eps_h <= 0 or min(self.a_pos, self.pos_floor, self.a_cons) < 0:
            raise ValueError("loss coefficients must be positive")
        if self.n_probes < 0 or self.a_probe < 0:
            raise ValueError("n_probes and a_probe must be nonnegative")
        if self.batch < 1 or self.epochs < 0 or self.n_samples < 1:
            raise ValueError("batch, epochs and n_samples must be positive")


@dataclass(frozen=True)
class LabeledSample:
    obs: Observation
    label: str
    source_env: int
    source_pose: Pose

    def to_dict(self) -> dict:
        return {
            "points": self.obs.scan.points.ravel().tolist(),
            "saturated": self.obs.scan.saturated.astype(int).tolist(),
            "rho": self.obs.rho, "phi": self.obs.phi, "label": self.label,
            "env": self.source_env,
            "pose": [self.source_pose.x, self.source_pose.y, self.source_pose.theta],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "LabeledSample":
        scan = LidarScan(np.asarray(d["points"], dtype=float).reshape(-1, 2),
                         np.asarray(d["saturated"], dtype=bool))
        return cls(Observation(scan, float(d["rho"]), float(d["phi"])), d["label"], int(d["env"]),
                   Pose(*d["pose"]))


def label_for(min_range: float, d_c: float, margin: float) -> str:
    if min_range <= d_c:
        return UNSAFE
    if min_range >= d_c + margin:
        return SAFE
    return BOUNDARY


# ------------------------------------------------------------------ data


@dataclass
class Batch:
    """Array view of a list of samples."""

    points: np.ndarray  # (B, n, 2)
    rho: np.ndarray
    phi: np.ndarray
    safe: np.ndarray  # bool (B,)
    unsafe: np.ndarray

    def __len__(self) -> int:
        return len(self.rho)

    def subset(self, idx) -> "Batch":
        return Batch(self.points[idx], self.rho[idx], self.phi[idx], self.safe[idx], self.unsafe[idx])

    @classmethod
    def from_samples(cls, samples: Sequence[LabeledSample]) -> "Batch":
        labels = np.array([s.label for s in samples])
        return cls(
            np.stack([s.obs.scan.points for s in samples]),
            np.array([s.obs.rho for s in samples]),
            np.array([s.obs.phi for s in samples]),
            labels == SAFE, labels == UNSAFE,
        )


def sample_poses(env: Environment, count: int, rng: np.random.Generator,
                 min_clearance: float = 0.0) -> np.ndarray:
    """Uniform poses over the workspace and heading, outside every obstacle."""
    (x0, y0), (x1, y1) = env.bounds.lo, env.bounds.hi
    obstacles = env.solid_obstacles()
    out = np.empty((0, 3))
    while len(out) < count:
        n = 2 * (count - len(out)) + 16
        cand = np.column_stack([rng.uniform(x0, x1, n), rng.uniform(y0, y1, n),
                                rng.uniform(-np.pi, np.pi, n)])
        ok = signed_distance(obstacles, cand[:, :2]) > min_clearance
        out = np.vstack([out, cand[ok]])
    return out[:count]


def _goal_range_bearing(poses: np.ndarray, goal) -> tuple:
    gx = goal[0] - poses[:, 0]
    gy = goal[1] - poses[:, 1]
    phi = np.arctan2(gy, gx) - poses[:, 2]
    phi = np.mod(phi + np.pi, 2 * np.pi) - np.pi
    phi = np.where(phi <= -np.pi, phi + 2 * np.pi, phi)
    return np.hypot(gx, gy), phi


def sample_dataset(envs: Sequence[Environment], cfg: TrainConfig, rng: np.random.Generator,
                   n_rays: int = 32, d_o: float = 3.0, d_c: float = 0.2) -> List[LabeledSample]:
    """N poses split round-robin over ``envs``, observed with the simulated Lidar."""
    if not envs:
        raise ValueError("need at least one environment")
    counts = [cfg.n_samples // len(envs) + (i < cfg.n_samples % len(envs)) for i in range(len(envs))]
    samples = []
    for e, (env, count) in enumerate(zip(envs, counts)):
        if count == 0:
            continue
        poses = sample_poses(env, count, rng)
        ranges = scan_ranges(env.solid_obstacles(), poses, n_rays, d_o)
        pts = ranges_to_points(ranges)
        rho, phi = _goal_range_bearing(poses, env.goal)
        for p, r, pt, g_r, g_p in zip(poses, ranges, pts, rho, phi):
            scan = LidarScan(pt, r >= d_o)
            label = label_for(float(np.min(np.hypot(pt[:, 0], pt[:, 1]))), d_c, cfg.label_margin)
            samples.append(LabeledSample(Observation(scan, float(g_r), float(g_p)), label, e,
                                         Pose(*p)))
    return samples


def save_dataset(samples: Sequence[LabeledSample], path) -> None:
    with open(path, "w") as f:
        for s in samples:
            f.write(json.dumps(s.to_dict(), sort_keys=True) + "\n")


def load_dataset(path) -> List[LabeledSample]:
    with open(path) as f:
        return [LabeledSample.from_dict(json.loads(line)) for line in f if line.strip()]


# ------------------------------------------------------------------ forward/backward helpers


def _cbf_forward(model: CertificateModel, pts: np.ndarray):
    enc_out, enc_acts = nn.forward_cached(model.encoder, pts)  # (B, n, 48)
    arg = enc_out.argmax(axis=-2)  # (B, 48)
    feat = np.take_along_axis(enc_out, arg[:, None, :], axis=-2)[:, 0, :]
    head_out, head_acts = nn.forward_cached(model.barrier_head, feat)
    dmin = np.sqrt(np.min(pts[..., 0] ** 2 + pts[..., 1] ** 2, axis=-1))
    h = head_out[:, 0] - dmin + model.d_c
    return h, (enc_out.shape, enc_acts, arg, head_acts)


def _cbf_backward(model: CertificateModel, cache, upstream: np.ndarray):
    shape, enc_acts, arg, head_acts = cache
    t_head = nn.backward_cached(model.barrier_head, head_acts, upstream[:, None])
    g_feat = t_head.inputs  # (B, 48)
    g_enc = np.zeros(shape)
    np.put_along_axis(g_enc, arg[:, None, :], g_feat[:, None, :], axis=-2)
    t_enc = nn.backward_cached(model.encoder, enc_acts, g_enc)
    return t_enc, t_head


def _cbf_batch(model: CertificateModel, pts: np.ndarray, chunk: int = 4096) -> np.ndarray:
    """Forward-only barrier values for (P, n, 2) point sets, in memory-bounded chunks."""
    out = np.empty(len(pts))
    for s in range(0, len(pts), chunk):
        out[s:s + chunk] = cbf_values(model, pts[s:s + chunk])
    return out


def _inverse_rows(tr: np.ndarray, pts: np.ndarray) -> np.ndarray:
    """Row-wise inverse transform: tr (P, 3) applied to pts (P, ..., 2)."""
    extra = (1,) * (pts.ndim - 2)
    dx, dy, th = (tr[:, i].reshape(-1, *extra) for i in range(3))
    c, s = np.cos(th), np.sin(th)
    qx = pts[..., 0] - dx
    qy = pts[..., 1] - dy
    return np.stack([c * qx + s * qy, -s * qx + c * qy], axis=-1)


def relaxed_goal_cost(model: CertificateModel, obs: Observation, cfg: ControllerConfig) -> float:
    """Optimal value of the penalised goal-seeking problem over the whole grid."""
    ev = evaluate_candidates(model, obs, cfg.transforms)
    return float(goal_costs(model, ev, cfg).min())


def relaxed_goal_argmin(model: CertificateModel, batch: Batch, cfg: ControllerConfig,
                        h_t: Optional[np.ndarray] = None, chunk: int = 8):
    """Batched minimum of the penalised goal-seeking cost.

    Candidates are visited in increasing order of the cheap part of the cost
    (effort + CLF penalty); a sample stops once that lower bound reaches its
    best full cost, so the result equals the exhaustive minimum.
    Returns (cost (B,), argmin (B,)).
    """
    l1, l2, l3 = cfg.goal_lambdas
    T = cfg.transforms
    norms = cfg.grid.norms
    B, K = len(batch), len(T)
    if h_t is None:
        h_t = _cbf_batch(model, batch.points)
    V_t = nn.forward(model.lyapunov, clf_inputs(batch.rho, batch.phi))[:, 0] + clf_prior(batch.rho, batch.phi)
    gx = batch.rho * np.cos(batch.phi)
    gy = batch.rho * np.sin(batch.phi)
    g_next = apply_inverse_batch(T, np.stack([gx, gy], axis=-1))  # (K, B, 2)
    r_next = np.hypot(g_next[..., 0], g_next[..., 1]).T  # (B, K)
    p_next = np.arctan2(g_next[..., 1], g_next[..., 0]).T
    V_next = nn.forward(model.lyapunov, clf_inputs(r_next, p_next))[..., 0] + clf_prior(r_next, p_next)
    still = np.all(T == 0.0, axis=1)
    V_next[:, still] = V_t[:, None]
    cheap = l1 * norms[None, :] + l2 * relu(V_next - model.alpha_V * V_t[:, None] + cfg.gamma_V)

    order = np.lexsort((np.broadcast_to(np.arange(K), (B, K)), np.broadcast_to(norms, (B, K)), cheap),
                       axis=1)
    best = np.full(B, np.inf)
    best_k = np.zeros(B, dtype=int)
    pos = 0
    rows = np.arange(B)
    while pos < K:
        cols = order[:, pos:pos + chunk]  # (B, c)
        bound = cheap[rows[:, None], cols]
        active = bound < best[:, None]
        if not active.any():
            break
        bi, ci = np.nonzero(active)
        ks = cols[bi, ci]
        h_next = np.where(still[ks], h_t[bi], 0.0)
        moving = ~still[ks]
        if moving.any():
            moved = _inverse_rows(T[ks[moving]], batch.points[bi[moving]])
            h_next[moving] = _cbf_batch(model, moved)
        full = cheap[bi, ks] + l3 * relu(h_next - model.alpha_h * h_t[bi] + cfg.gamma_h)
        # visit in order so that the first of equal costs is kept
        for j in np.argsort(ci, kind="stable"):
            b = bi[j]
            if full[j] < best[b]:
                best[b] = full[j]
                best_k[b] = ks[j]
        pos += chunk
    return best, best_k


# ------------------------------------------------------------------ loss


@dataclass
class LossTerms:
    total: float
    safe: float
    unsafe: float
    goal: float
    positivity: float
    consistency: float
    reg: float


_GOAL_INPUT = clf_inputs(np.zeros(1), np.zeros(1))  # rho = 0, phi = 0


def certificate_loss(model: CertificateModel, batch, cfg: TrainConfig, ctrl: ControllerConfig,
                     grad: bool = False, probes: Optional[np.ndarray] = None):
    """Mean classification + relaxed goal cost + CLF positivity over the batch, plus L2.

    With ``grad=True`` returns (LossTerms, [tape_encoder, tape_head, tape_lyapunov]); the
    goal term is differentiated with its minimising candidate held fixed. ``probes`` (B, R)
    holds extra candidate indices per sample; the one whose predicted learned offset dips
    most is penalised one-sidedly, again with that choice held fixed.
    """
    if not isinstance(batch, Batch):
        batch = Batch.from_samples(batch)
    B = len(batch)
    if B == 0:
        raise ValueError("empty batch")
    eps = cfg.eps_h
    l1, l2, l3 = ctrl.goal_lambdas

    h_t, cache_t = _cbf_forward(model, batch.points)
    Lg, k = relaxed_goal_argmin(model, batch, ctrl, h_t=h_t)
    x_t = clf_inputs(batch.rho, batch.phi)
    vo_t, acts_vt = nn.forward_cached(model.lyapunov, x_t)
    V_t = vo_t[:, 0] + clf_prior(batch.rho, batch.phi)
    vo_g, acts_vg = nn.forward_cached(model.lyapunov, _GOAL_INPUT)

    T = ctrl.transforms[k]  # (B, 3) chosen motion per sample
    pts_n = _inverse_rows(T, batch.points)
    h_n, cache_n = _cbf_forward(model, pts_n)
    still = np.all(T == 0.0, axis=1)
    h_n = np.where(still, h_t, h_n)
    # learned offsets h_sigma = h + min range - d_c; d_c cancels in the difference
    r_t = np.linalg.norm(batch.points, axis=-1).min(-1)
    d_sig = np.where(still, 0.0, h_n - h_t + np.linalg.norm(pts_n, axis=-1).min(-1) - r_t)
    if probes is not None and np.size(probes):
        # the probe whose prediction is most optimistic (largest dip in h_sigma)
        probes = np.asarray(probes).reshape(B, -1)
        R = probes.shape[1]
        T_all = ctrl.transforms[probes.ravel()]
        pts_all = _inverse_rows(T_all, np.repeat(batch.points, R, axis=0))
        d_all = (_cbf_batch(model, pts_all) + np.linalg.norm(pts_all, axis=-1).min(-1)
                 - np.repeat(h_t + r_t, R)).reshape(B, R)
        d_all[np.all(T_all == 0.0, axis=1).reshape(B, R)] = 0.0
        j = probes[np.arange(B), d_all.argmin(axis=1)]
        T_w = ctrl.transforms[j]
        pts_w = _inverse_rows(T_w, batch.points)
        h_w, cache_w = _cbf_forward(model, pts_w)
        d_w = np.where(np.all(T_w == 0.0, axis=1), 0.0,
                       h_w - h_t + np.linalg.norm(pts_w, axis=-1).min(-1) - r_t)
        dip = np.minimum(d_w, 0.0)
    else:
        dip = np.zeros(B)

    safe_term = cfg.a1 * relu(eps + h_t) * batch.safe
    unsafe_term = cfg.a2 * relu(eps - h_t) * batch.unsafe
    pos_gap = cfg.pos_floor * batch.rho ** 2 - V_t
    pos_term = cfg.a_pos * relu(pos_gap)
    cons_term = cfg.a_cons * d_sig ** 2 + cfg.a_probe * dip ** 2
    goal_anchor = cfg.a_pos * float(vo_g[0, 0]) ** 2
    reg = cfg.l2 * (model.barrier_head.sq_norm() + model.lyapunov.sq_norm())
    total = float(np.mean(safe_term + unsafe_term + cfg.a3 * Lg + pos_term + cons_term)
                  + goal_anchor + reg)
    terms = LossTerms(total, float(safe_term.mean()), float(unsafe_term.mean()), float(Lg.mean()),
                      float(pos_term.mean()) + goal_anchor, float(cons_term.mean()), reg)
    if not grad:
        return terms

    g = _inverse_rows(T, np.stack([batch.rho * np.cos(batch.phi), batch.rho * np.sin(batch.phi)], -1))
    r_n, p_n = np.hypot(g[:, 0], g[:, 1]), np.arctan2(g[:, 1], g[:, 0])
    x_n = clf_inputs(r_n, p_n)
    vo_n, acts_vn = nn.forward_cached(model.lyapunov, x_n)
    V_n = np.where(still, V_t, vo_n[:, 0] + clf_prior(r_n, p_n))
    res_V = V_n - model.alpha_V * V_t + ctrl.gamma_V
    res_h = h_n - model.alpha_h * h_t + ctrl.gamma_h

    w = cfg.a3 / B
    # d/dh_t of the classification terms and the CBF penalty (current observation)
    g_ht = (cfg.a1 * (eps + h_t > 0) * batch.safe - cfg.a2 * (eps - h_t > 0) * batch.unsafe) / B
    act_h = (res_h > 0) * w * l3
    act_V = (res_V > 0) * w * l2
    # a still candidate predicts h_{t+1} = h_t, so its gradient folds into the current scan
    g_ht = g_ht - model.alpha_h * act_h + np.where(still, act_h, 0.0)
    g_hn = np.where(still, 0.0, act_h)
    g_cons = 2.0 * cfg.a_cons * d_sig / B
    g_hn = g_hn + g_cons
    g_hw = 2.0 * cfg.a_probe * dip / B
    g_ht = g_ht - g_cons - g_hw
    g_Vt = -model.alpha_V * act_V + np.where(still, act_V, 0.0)
    g_Vn = np.where(still, 0.0, act_V)
    g_Vt = g_Vt - cfg.a_pos * (pos_gap > 0) / B

    te, th = _cbf_backward(model, cache_t, g_ht)
    te2, th2 = _cbf_backward(model, cache_n, g_hn)
    te.add_(te2)
    th.add_(th2)
    if np.any(dip):
        te3, th3 = _cbf_backward(model, cache_w, g_hw)
        te.add_(te3)
        th.add_(th3)
    tv = nn.backward_cached(model.lyapunov, acts_vt, g_Vt[:, None])
    tv.add_(nn.backward_cached(model.lyapunov, acts_vn, g_Vn[:, None]))
    tv.add_(nn.backward_cached(model.lyapunov, acts_vg, 2.0 * cfg.a_pos * vo_g))
    for tape, net in ((th, model.barrier_head), (tv, model.lyapunov)):
        for gp, p in zip(tape.params(), net.params()):
            gp += 2.0 * cfg.l2 * p
    return terms, [te, th, tv]


# ------------------------------------------------------------------ training loop


@dataclass
class TrainResult:
    model: CertificateModel
    history: List[dict] = field(default_factory=list)

    def __iter__(self):
        return iter((self.model, self.history))


def write_history_csv(history: Sequence[dict], path) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["epoch", "train_loss", "val_loss"])
        for row in history:
            w.writerow([row["epoch"], repr(row["train_loss"]), repr(row["val_loss"])])


def split_indices(n: int, fraction: float, rng: np.random.Generator):
    perm = rng.permutation(n)
    n_val = max(1, int(round(fraction * n))) if n > 1 else 0
    return perm[n_val:], perm[:n_val]


def fit(model: CertificateModel, samples: Sequence[LabeledSample], cfg: TrainConfig,
        ctrl: ControllerConfig, rng: np.random.Generator, progress=None) -> TrainResult:
    """Mini-batch SGD on ``samples``; mutates and returns ``model``."""
    data = Batch.from_samples(samples)
    train_idx, val_idx = split_indices(len(data), cfg.validation_fraction, rng)
    history = []
    for epoch in range(cfg.epochs):
        perm = train_idx[rng.permutation(len(train_idx))]
        losses = []
        for s in range(0, len(perm), cfg.batch):
            batch = data.subset(perm[s:s + cfg.batch])
            probes = (rng.integers(len(ctrl.grid), size=(len(batch), cfg.n_probes))
                      if cfg.n_probes else None)
            terms, tapes = certificate_loss(model, batch, cfg, ctrl, grad=True, probes=probes)
            if not np.isfinite(terms.total):
                raise TrainingDiverged(f"non-finite loss at epoch {epoch}, batch {s // cfg.batch}")
            for net, tape in zip(model.nets(), tapes):
                nn.sgd_step(net, tape, cfg.lr, 0.0)
            losses.append(terms.total * len(batch))
        train_loss = float(sum(losses) / len(perm))
        val_loss = float("nan")
        if len(val_idx):
            val_loss = _dataset_loss(model, data.subset(val_idx), cfg, ctrl)
        if not (np.isfinite(train_loss) and (np.isfinite(val_loss) or not len(val_idx))):
            raise TrainingDiverged(f"non-finite loss after epoch {epoch}")
        history.append({"epoch": epoch + 1, "train_loss": train_loss, "val_loss": val_loss})
        log.info("epoch %d train %.5f val %.5f", epoch + 1, train_loss, val_loss)
        if progress is not None:
            progress(history[-1])
    return TrainResult(model, history)


def _dataset_loss(model, data: Batch, cfg: TrainConfig, ctrl: ControllerConfig, chunk: int = 512) -> float:
    reg = cfg.l2 * (model.barrier_head.sq_norm() + model.lyapunov.sq_norm())
    acc = anchor = 0.0
    for s in range(0, len(data), chunk):
        part = data.subset(np.arange(s, min(s + chunk, len(data))))
        terms = certificate_loss(model, part, cfg, ctrl)
        anchor = cfg.a_pos * float(nn.forward(model.lyapunov, _GOAL_INPUT)[0, 0]) ** 2
        acc += (terms.total - reg - anchor) * len(part)
    return acc / len(data) + anchor + reg


def train(envs: Sequence[Environment], cfg: TrainConfig = TrainConfig(),
          ctrl: ControllerConfig = ControllerConfig(), n_rays: int = 32, d_o: float = 3.0,
          d_c: float = 0.2, alpha_h: float = 0.9, alpha_V: float = 0.93,
          samples: Optional[Sequence[LabeledSample]] = None, progress=None) -> TrainResult:
    """Sample a dataset from ``envs`` (unless given) and fit a fresh model.

    All randomness derives from ``cfg.seed``.
    """
    rng = np.random.default_rng(cfg.seed)
    model = CertificateModel.init(cfg.seed, d_c=d_c, alpha_h=alpha_h, alpha_V=alpha_V, n_rays=n_rays)
    if cfg.epochs == 0:
        return TrainResult(model, [])
    if samples is None:
        samples = sample_dataset(envs, cfg, rng, n_rays=n_rays, d_o=d_o, d_c=d_c)
    return fit(model, samples, cfg, ctrl, rng, progress)


# ------------------------------------------------------------------ verification


@dataclass
class FeasibilityReport:
    n_samples: int
    n_feasible: int
    fraction_feasible: float
    counterexamples: List[dict]

    def to_dict(self) -> dict:
        return asdict(self)

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")


MAX_COUNTEREXAMPLES = 100


def verify(model: CertificateModel, envs: Sequence[Environment], M: int, rng: np.random.Generator,
           ctrl: ControllerConfig = ControllerConfig(), d_o: float = 3.0, chunk: int = 2000
           ) -> FeasibilityReport:
    """Fraction of sampled collision-free states where some grid input satisfies
    h_{t+1} - alpha_h h_t <= 0 under one-step lookahead.

    The zero input reproduces the current scan exactly, so any state with h <= 0
    is feasible without searching the grid.
    """
    if M < 1:
        raise ValueError("M must be >= 1")
    counts = [M // len(envs) + (i < M % len(envs)) for i in range(len(envs))]
    T = ctrl.transforms
    moving = ~np.all(T == 0.0, axis=1)
    n_ok = 0
    bad = []
    for e, (env, count) in enumerate(zip(envs, counts)):
        if count == 0:
            continue
        poses = sample_poses(env, count, rng, min_clearance=model.d_c)
        for s in range(0, count, chunk):
            P = poses[s:s + chunk]
            pts = ranges_to_points(scan_ranges(env.solid_obstacles(), P, model.n_rays, d_o))
            h = _cbf_batch(model, pts)
            ok = h <= 0.0
            for j in np.flatnonzero(~ok):
                moved = apply_inverse_batch(T[moving], pts[j])
                best = float(np.min(_cbf_batch(model, moved) - model.alpha_h * h[j]))
                best = min(best, (1.0 - model.alpha_h) * h[j])
                if best <= 0.0:
                    ok[j] = True
                elif len(bad) < MAX_COUNTEREXAMPLES:
                    bad.append({"env": e, "pose": P[j].tolist(), "h": float(h[j]),
                                "best_residual": best})
            n_ok += int(ok.sum())
    return FeasibilityReport(M, n_ok, n_ok / M, bad)
