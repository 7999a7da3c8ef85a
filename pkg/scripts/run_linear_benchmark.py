"""Desk-scale benchmark on a random linear objective in [-1,1]^30.

Runs the classifier-guided optimizers against the random baselines over
seeded replicates and writes traces plus an aggregate CSV.

Usage:
    python scripts/run_linear_benchmark.py [--replicates 15] [--out out/linear30]
"""

import argparse
import sys

from levelcut.cli import config_from_dict, run_experiment


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--replicates", type=int, default=15)
    parser.add_argument("--rounds", type=int, default=10)
    parser.add_argument("--batch-size", type=int, default=100)
    parser.add_argument("--d", type=int, default=30)
    parser.add_argument("--base-seed", type=int, default=0)
    parser.add_argument("--out", default="out/linear30")
    parser.add_argument("--workers", type=int, default=None)
    args = parser.parse_args()

    config = config_from_dict(
        {
            "problem": {"objective": "random-linear", "d": args.d},
            "methods": [
                "classify-rf",
                "classify-tuned",
                "random",
                "random-2x",
            ],
            "rounds": args.rounds,
            "batch_size": args.batch_size,
            "replicates": args.replicates,
            "base_seed": args.base_seed,
            "output_dir": args.out,
        }
    )
    report, failures = run_experiment(config, workers=args.workers)
    print(f"{'method':>16s} {'median':>10s} {'q25':>10s} {'q75':>10s}  (final round)")
    for method in config.methods:
        last = report.curve(method["label"])[-1]
        print(
            f"{method['label']:>16s} {last['median']:>10.4f} "
            f"{last['q25']:>10.4f} {last['q75']:>10.4f}"
        )
    for f in failures:
        print(f"FAILED {f['method']} rep {f['replicate']}: {f['error']}", file=sys.stderr)
    return 3 if failures else 0


if __name__ == "__main__":
    sys.exit(main())
