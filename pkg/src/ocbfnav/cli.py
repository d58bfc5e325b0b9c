"""Command-line front end: train, verify, run, bench."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import List, Optional

import numpy as np

from .benchmark import benchmark, bugtrap_trials, check_traces, save_logs
from .certificates import CertificateModel
from .config import ConfigError, RunConfig, apply_overrides, load_config
from .environments import bugtrap_env, random_env
from .geometry import Environment, empty_environment
from .plotting import trajectory_svg
from .simulate import POLICIES, run_episode
from .training import (TrainingDiverged, load_dataset, sample_dataset, save_dataset, train,
                       verify, write_history_csv)

log = logging.getLogger("ocbfnav")

TRAIN_ENV_BASE_SEED = 1_000_000  # disjoint from the benchmark seeds


def training_envs(cfg: RunConfig) -> List[Environment]:
    env_cfg = cfg.env()
    envs = [random_env(TRAIN_ENV_BASE_SEED + i, cfg=env_cfg) for i in range(cfg["train"]["n_envs"])]
    return envs + [empty_environment(size=env_cfg.size)]


def verification_envs(cfg: RunConfig) -> List[Environment]:
    return [random_env(i, cfg=cfg.env()) for i in range(cfg["verify"]["n_envs"])]


def _load_model(path: Optional[str], cfg: RunConfig) -> CertificateModel:
    if path is None:
        # untrained heads output zero, so the certificates equal their geometric priors
        return CertificateModel.init(cfg.seed, **cfg.model_kwargs())
    model = CertificateModel.load(path)
    if model.n_rays != cfg["model"]["n_rays"]:
        raise ConfigError(f"model has {model.n_rays} rays but model.n_rays is "
                          f"{cfg['model']['n_rays']}", None, str(path))
    return model


def _parse_env(spec: str, cfg: RunConfig) -> Environment:
    if spec == "bugtrap":
        return bugtrap_env()
    if spec == "empty":
        return empty_environment(size=cfg.env().size)
    if spec.startswith("random:"):
        return random_env(int(spec.split(":", 1)[1]), cfg=cfg.env())
    return Environment.load(spec)


def _write_json(path: Path, data) -> None:
    path.write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")


# ------------------------------------------------------------------ subcommands


def cmd_train(args, cfg: RunConfig) -> int:
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    tcfg = cfg.train()
    samples = None
    if args.dataset and Path(args.dataset).exists():
        samples = load_dataset(args.dataset)
    elif args.dataset:
        samples = sample_dataset(training_envs(cfg), tcfg, np.random.default_rng(tcfg.seed),
                                 n_rays=cfg["model"]["n_rays"], d_o=cfg["sim"]["d_o"],
                                 d_c=cfg["model"]["d_c"])
        save_dataset(samples, args.dataset)

    def progress(row):
        print(f"epoch {row['epoch']:3d}  train {row['train_loss']:.5f}  val {row['val_loss']:.5f}",
              flush=True)

    mk = cfg.model_kwargs()
    result = train(training_envs(cfg), tcfg, cfg.controller(), n_rays=mk["n_rays"],
                   d_o=cfg["sim"]["d_o"], d_c=mk["d_c"], alpha_h=mk["alpha_h"],
                   alpha_V=mk["alpha_V"], samples=samples, progress=None if args.quiet else progress)
    result.model.save(out / "model.json")
    write_history_csv(result.history, out / "history.csv")
    print(f"wrote {out / 'model.json'} and {out / 'history.csv'}")
    return 0


def cmd_verify(args, cfg: RunConfig) -> int:
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    model = _load_model(args.model, cfg)
    M = args.samples if args.samples is not None else cfg["verify"]["samples"]
    report = verify(model, verification_envs(cfg), M, np.random.default_rng(cfg.seed),
                    ctrl=cfg.controller(), d_o=cfg["sim"]["d_o"])
    report.save(out / "feasibility.json")
    print(f"fraction feasible {report.fraction_feasible:.6f} "
          f"({report.n_feasible}/{report.n_samples}), "
          f"{len(report.counterexamples)} counterexamples -> {out / 'feasibility.json'}")
    return 0


def cmd_run(args, cfg: RunConfig) -> int:
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    model = _load_model(args.model, cfg)
    env = _parse_env(args.env, cfg)
    max_time = args.max_time
    if max_time is None and args.env == "bugtrap":
        max_time = cfg["bugtrap"]["max_time"]
    ctrl = cfg.controller()
    episode = run_episode(args.policy, env, model, ctrl, cfg.sim(max_time), seed=cfg.seed)
    (out / "episode.jsonl").write_text(episode.to_jsonl())
    (out / "trajectory.svg").write_text(trajectory_svg(env, episode, d_c=model.d_c,
                                                       goal_radius=ctrl.goal_radius))
    when = "" if episode.outcome_time is None else f" at t={episode.outcome_time:.2f} s"
    print(f"{args.policy}: {episode.outcome}{when}, {len(episode.steps)} steps "
          f"-> {out / 'episode.jsonl'}, {out / 'trajectory.svg'}")
    return 0


def cmd_bench(args, cfg: RunConfig) -> int:
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    model = _load_model(args.model, cfg)
    policy = args.policy or cfg["bench"]["policy"]
    workers = args.workers if args.workers is not None else cfg["bench"]["workers"]
    ctrl = cfg.controller()
    if args.env == "bugtrap":
        n = args.n_envs if args.n_envs is not None else cfg["bugtrap"]["episodes"]
        report, logs = bugtrap_trials(model, n, cfg.seed, policy,
                                      cfg.sim(cfg["bugtrap"]["max_time"]), ctrl, workers)
    else:
        n = args.n_envs if args.n_envs is not None else cfg["bench"]["n_envs"]
        report, logs = benchmark(model, n, cfg.seed, cfg.sim(), ctrl, cfg.env(), policy, workers)
    report.save(out / "report.json")
    save_logs(logs, out / "episodes.jsonl")
    if policy == "hybrid":
        tc = check_traces(logs, model.alpha_V, ctrl.eps_h)
        _write_json(out / "trace_check.json", {
            "goal_seeking_decrease": tc.goal_seeking_decrease, "exploration_exit": tc.exploration_exit,
            "sequence_bound": tc.sequence_bound, "exploration_band": tc.exploration_band,
            "messages": tc.messages[:100]})
    # wall-clock figures vary run to run, so they stay out of the deterministic report
    _write_json(out / "timing.json", {"median_latency_ms": report.median_latency_ms,
                                      "mean_latency_ms": report.mean_latency_ms})
    print(report.summary_table())
    return 0


# ------------------------------------------------------------------ parser


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML run configuration (see README for the schema)")
    common.add_argument("--seed", type=int, help="overrides the config seed")
    common.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE",
                        help="override one config value; repeatable")
    common.add_argument("--out-dir", default=".", help="directory for output artifacts")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="ocbfnav", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", parents=[common], help="train certificates; writes model.json and history.csv")
    t.add_argument("--dataset", help="JSON-lines dataset cache: read if present, else written")
    t.add_argument("--quiet", action="store_true", help="no per-epoch progress lines")

    v = sub.add_parser("verify", parents=[common], help="sampled CBF feasibility check")
    v.add_argument("--model")
    v.add_argument("--samples", type=int)

    r = sub.add_parser("run", parents=[common], help="one episode; writes episode.jsonl and trajectory.svg")
    r.add_argument("--model")
    r.add_argument("--env", default="random:0", help="bugtrap, empty, random:SEED or an environment JSON file")
    r.add_argument("--policy", choices=POLICIES, default="hybrid")
    r.add_argument("--max-time", type=float)

    b = sub.add_parser("bench", parents=[common], help="randomised benchmark or repeated bug-trap trials")
    b.add_argument("--model")
    b.add_argument("--n-envs", type=int)
    b.add_argument("--env", choices=("random", "bugtrap"), default="random")
    b.add_argument("--policy", choices=POLICIES)
    b.add_argument("--workers", type=int)
    return p


COMMANDS = {"train": cmd_train, "verify": cmd_verify, "run": cmd_run, "bench": cmd_bench}


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config) if args.config else RunConfig()
        if args.seed is not None:
            cfg.seed = args.seed
        apply_overrides(cfg, args.set)
        return COMMANDS[args.command](args, cfg)
    except ConfigError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except (OSError, ValueError, TrainingDiverged) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
