"""Hybrid controller versus the CLF-greedy baseline in the bug trap.

    python3 demos/bugtrap.py [--model model.json] [--out-dir demo_out]

Writes one SVG per policy; without ``--model`` the untrained (prior-only)
certificates are used.
"""

import argparse
from pathlib import Path

from ocbfnav import CertificateModel, ControllerConfig, SimConfig, bugtrap_env, run_episode
from ocbfnav.plotting import trajectory_svg


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--model")
    ap.add_argument("--out-dir", default="demo_out")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--max-time", type=float, default=60.0)
    args = ap.parse_args()

    model = CertificateModel.load(args.model) if args.model else CertificateModel.prior_only()
    env = bugtrap_env()
    ctrl = ControllerConfig()
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for policy in ("hybrid", "clf_greedy"):
        log = run_episode(policy, env, model, ctrl, SimConfig(max_time=args.max_time), seed=args.seed)
        modes = "".join(sorted({s.mode for s in log.steps}, key="GEF".index))
        path = out / f"bugtrap_{policy}.svg"
        path.write_text(trajectory_svg(env, log, d_c=model.d_c, goal_radius=ctrl.goal_radius))
        print(f"{policy:>10}: {log.outcome} after {log.outcome_time:.1f} s, modes {modes} -> {path}")


if __name__ == "__main__":
    main()
