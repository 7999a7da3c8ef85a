"""Comparison-feedback sweep: how many pairwise comparisons per action are
enough to match full function values?

Runs the tree-classifier optimizer with comparison-derived labels at several
comparison budgets c, next to the full-value variant and the random baseline.

Usage:
    python scripts/run_pairwise_sweep.py [--replicates 5] [--out out/pairwise]
"""

import argparse
import sys

from levelcut.cli import config_from_dict, run_experiment


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--replicates", type=int, default=5)
    parser.add_argument("--d", type=int, default=30)
    parser.add_argument("--budgets", type=int, nargs="+", default=[2, 5, 10, 20])
    parser.add_argument("--base-seed", type=int, default=0)
    parser.add_argument("--out", default="out/pairwise")
    parser.add_argument("--workers", type=int, default=None)
    args = parser.parse_args()

    methods = ["classify-rf", "random"]
    methods += [{"name": "pairwise", "c": c, "classifier": "rf"} for c in args.budgets]
    config = config_from_dict(
        {
            "problem": {"objective": "random-linear", "d": args.d},
            "methods": methods,
            "rounds": 10,
            "batch_size": 100,
            "replicates": args.replicates,
            "base_seed": args.base_seed,
            "output_dir": args.out,
        }
    )
    report, failures = run_experiment(config, workers=args.workers)
    for method in config.methods:
        last = report.curve(method["label"])[-1]
        print(f"{method['label']:>18s}  final median {last['median']:.4f}")
    for f in failures:
        print(f"FAILED {f['method']} rep {f['replicate']}: {f['error']}", file=sys.stderr)
    return 3 if failures else 0


if __name__ == "__main__":
    sys.exit(main())
