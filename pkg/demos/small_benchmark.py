"""Short randomised benchmark with trace-invariant checks.

    python3 demos/small_benchmark.py [--model model.json] [--n-envs 20]
"""

import argparse

from ocbfnav import CertificateModel, ControllerConfig, SimConfig, benchmark, check_traces


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--model")
    ap.add_argument("--n-envs", type=int, default=20)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    model = CertificateModel.load(args.model) if args.model else CertificateModel.prior_only()
    ctrl = ControllerConfig()
    report, logs = benchmark(model, args.n_envs, args.seed, SimConfig(), ctrl)
    print(report.summary_table())
    tc = check_traces(logs, model.alpha_V, ctrl.eps_h)
    print(f"trace violations: decrease {tc.goal_seeking_decrease}, exit {tc.exploration_exit}, "
          f"sequence {tc.sequence_bound}, band {tc.exploration_band}")


if __name__ == "__main__":
    main()
