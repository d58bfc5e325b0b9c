import numpy as np
import pytest

from ocbfnav.certificates import CertificateModel
from ocbfnav.controller import ControllerConfig, evaluate, goal_costs
from ocbfnav.environments import random_env
from ocbfnav.geometry import clearance
from ocbfnav.training import (BOUNDARY, SAFE, UNSAFE, Batch, TrainConfig, certificate_loss,
                              label_for, load_dataset, relaxed_goal_argmin, sample_dataset,
                              save_dataset, train, verify, write_history_csv)


@pytest.fixture(scope="module")
def samples():
    envs = [random_env(1000 + i) for i in range(4)]
    return sample_dataset(envs, TrainConfig(n_samples=200), np.random.default_rng(0))


def test_labels():
    assert label_for(0.2, 0.2, 0.05) == UNSAFE
    assert label_for(0.25, 0.2, 0.05) == SAFE
    assert label_for(0.22, 0.2, 0.05) == BOUNDARY


def test_dataset_labels_match_geometry(samples):
    envs = [random_env(1000 + i) for i in range(4)]
    assert len(samples) == 200
    for s in samples[::10]:
        d = clearance(envs[s.source_env], (s.source_pose.x, s.source_pose.y))
        r = float(np.min(np.linalg.norm(s.obs.scan.points, axis=1)))
        assert r >= d - 1e-9  # rays can only overestimate clearance
        if s.label == UNSAFE:
            assert r <= 0.2


def test_dataset_round_trip(samples, tmp_path):
    path = tmp_path / "data.jsonl"
    save_dataset(samples, path)
    back = load_dataset(path)
    assert len(back) == len(samples)
    for a, b in zip(samples, back):
        assert np.array_equal(a.obs.scan.points, b.obs.scan.points)
        assert np.array_equal(a.obs.scan.saturated, b.obs.scan.saturated)
        assert (a.obs.rho, a.obs.phi, a.label, a.source_pose) == (b.obs.rho, b.obs.phi, b.label,
                                                                 b.source_pose)


def test_relaxed_argmin_equals_exhaustive(random_model, samples):
    ctrl = ControllerConfig()
    cost, k = relaxed_goal_argmin(random_model, Batch.from_samples(samples), ctrl)
    for s, c, kk in zip(samples, cost, k):
        full = goal_costs(random_model, evaluate(random_model, s.obs, ctrl), ctrl)
        assert c == pytest.approx(full.min(), rel=1e-12, abs=1e-12)
        assert full[kk] == pytest.approx(full.min(), rel=1e-12, abs=1e-12)


def test_loss_gradient_matches_finite_differences(random_model, samples):
    ctrl = ControllerConfig()
    cfg = TrainConfig(a_cons=10.0)
    batch = Batch.from_samples(samples).subset(np.arange(24))
    _, tapes = certificate_loss(random_model, batch, cfg, ctrl, grad=True)
    rng = np.random.default_rng(5)
    eps = 1e-6
    worst = 0.0
    for net, tape in zip(random_model.nets(), tapes):
        for p, g in zip(net.params(), tape.params()):
            for _ in range(4):
                idx = np.unravel_index(rng.integers(p.size), p.shape)
                old = p[idx]
                p[idx] = old + eps
                lp = certificate_loss(random_model, batch, cfg, ctrl).total
                p[idx] = old - eps
                lm = certificate_loss(random_model, batch, cfg, ctrl).total
                p[idx] = old
                fd = (lp - lm) / (2 * eps)
                worst = max(worst, abs(g[idx] - fd) / max(abs(fd), abs(g[idx]), 1e-3))
    assert worst < 1e-3


def test_loss_terms_nonnegative(random_model, samples):
    terms = certificate_loss(random_model, samples[:50], TrainConfig(), ControllerConfig())
    for name in ("safe", "unsafe", "goal", "positivity", "consistency", "reg"):
        assert getattr(terms, name) >= 0.0
    assert np.isfinite(terms.total)


def test_zero_epochs_gives_prior():
    model, history = train([random_env(0)], TrainConfig(epochs=0))
    assert history == []
    assert model.to_dict() == CertificateModel.init(0).to_dict()


def test_short_training_reduces_loss(samples, tmp_path):
    cfg = TrainConfig(n_samples=200, epochs=4, seed=2)
    model, history = train([], cfg, samples=samples)
    assert len(history) == 4
    assert history[-1]["train_loss"] < history[0]["train_loss"]
    write_history_csv(history, tmp_path / "h.csv")
    lines = (tmp_path / "h.csv").read_text().splitlines()
    assert lines[0] == "epoch,train_loss,val_loss" and len(lines) == 5


def test_training_is_deterministic(samples):
    cfg = TrainConfig(n_samples=200, epochs=2, seed=3)
    a, _ = train([], cfg, samples=samples)
    b, _ = train([], cfg, samples=samples)
    assert a.to_dict() == b.to_dict()


def test_train_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(validation_fraction=1.0)
    with pytest.raises(ValueError):
        TrainConfig(a1=0.0)
    with pytest.raises(ValueError):
        TrainConfig(a_cons=-1.0)


def test_verify_prior_model_always_feasible():
    model = CertificateModel.prior_only()
    rep = verify(model, [random_env(5), random_env(6)], 300, np.random.default_rng(0))
    assert rep.n_samples == 300
    assert rep.fraction_feasible == 1.0 and rep.counterexamples == []


def test_verify_finds_counterexamples():
    model = CertificateModel.prior_only()
    # a large positive output offset makes h > 0 everywhere; only moving away can help
    model.barrier_head.biases[-1][:] = 5.0
    rep = verify(model, [random_env(5)], 200, np.random.default_rng(0))
    assert 0.0 <= rep.fraction_feasible < 1.0
    c = rep.counterexamples[0]
    assert set(c) == {"env", "pose", "h", "best_residual"}
    assert c["h"] > 0 and c["best_residual"] > 0


def test_verify_rejects_bad_count():
    with pytest.raises(ValueError):
        verify(CertificateModel.prior_only(), [random_env(0)], 0, np.random.default_rng(0))


def test_probe_consistency_gradient(random_model, samples):
    ctrl = ControllerConfig()
    cfg = TrainConfig(a_probe=1000.0)
    batch = Batch.from_samples(samples).subset(np.arange(24))
    rng = np.random.default_rng(6)
    probes = rng.integers(len(ctrl.grid), size=(24, 3))
    plain = certificate_loss(random_model, batch, cfg, ctrl)
    terms, tapes = certificate_loss(random_model, batch, cfg, ctrl, grad=True, probes=probes)
    assert terms.consistency != plain.consistency
    eps = 1e-7
    worst = 0.0
    for net, tape in zip(random_model.nets(), tapes):
        for p, g in zip(net.params(), tape.params()):
            for _ in range(3):
                idx = np.unravel_index(rng.integers(p.size), p.shape)
                old = p[idx]
                p[idx] = old + eps
                lp = certificate_loss(random_model, batch, cfg, ctrl, probes=probes).total
                p[idx] = old - eps
                lm = certificate_loss(random_model, batch, cfg, ctrl, probes=probes).total
                p[idx] = old
                fd = (lp - lm) / (2 * eps)
                worst = max(worst, abs(g[idx] - fd) / max(abs(fd), abs(g[idx]), 1e-3))
    assert worst < 1e-3


def test_still_probes_add_nothing(random_model, samples):
    ctrl = ControllerConfig()
    batch = Batch.from_samples(samples).subset(np.arange(8))
    zero = np.full((8, 2), ctrl.grid.candidates.tolist().index([0.0, 0.0]))
    cfg = TrainConfig(a_probe=1000.0)
    a = certificate_loss(random_model, batch, cfg, ctrl)
    b = certificate_loss(random_model, batch, cfg, ctrl, probes=zero)
    assert b.total == a.total
