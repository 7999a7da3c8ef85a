"""Numerical validation of the convergence bound and the Gaussian tail
inequalities behind the bootstrap consensus.

Runs fully logged oracle-classifier rounds on seeded finite problems, checks
the weight lower bound per round, and Monte-Carlo-checks the two tail
bounds.

Usage:
    python scripts/validate_bounds.py [--seeds 20]
"""

import argparse
import sys

import numpy as np

from levelcut.core import DiscreteSpace, SeedPolicy
from levelcut.objectives import gen_random_linear
from levelcut.optimize import OptimizerConfig, run_classify_opt
from levelcut.theory import (
    tuned_eta_and_bound,
    exact_classifier_log_floor,
    exact_log_prob,
    mc_chisq_ball,
    mc_gaussian_min,
    mw_lower_bound,
    verify_weight_bound,
)


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--seeds", type=int, default=20)
    parser.add_argument("--points", type=int, default=1024)
    parser.add_argument("--rounds", type=int, default=10)
    parser.add_argument("--batch-size", type=int, default=64)
    args = parser.parse_args()

    cfg = OptimizerConfig(
        T=args.rounds,
        n=args.batch_size,
        eta=0.5,
        classifier="oracle",
        threshold_policy="exact-population",
        sampler_mode="mw",
        theory_log=True,
    )
    floor = exact_classifier_log_floor(cfg.eta, cfg.T, args.points)
    worst_slack = np.inf
    worst_margin = np.inf
    ok = True
    for s in range(args.seeds):
        policy = SeedPolicy(s, 0)
        gen = policy.rng("problem")
        objective = gen_random_linear(16, gen)
        space = DiscreteSpace(
            ids=tuple(range(args.points)),
            features=gen.uniform(-1, 1, size=(args.points, 16)),
        )
        trace = run_classify_opt(objective, space, cfg, policy)
        x_star = int(np.argmin(objective.evaluate(space.features)))
        report = verify_weight_bound(trace, x_star)
        slack = min(r["slack"] for r in report.rows)
        margin = exact_log_prob(trace, x_star) - floor
        worst_slack = min(worst_slack, slack)
        worst_margin = min(worst_margin, margin)
        ok &= report.verdict and margin >= 0
    print(f"weight bound over {args.seeds} seeds: verdict={ok} "
          f"min slack {worst_slack:.4f}, min floor margin {worst_margin:.4f}")

    example = mw_lower_bound(0.5, 0.5, 10, 0, 16)
    eta_star, cor_bound = tuned_eta_and_bound(0.1, 0.5, 40, 16)
    print(f"reference values: bound(0.5,0.5,10,0,16)={example:.4f}, "
          f"tuned eta(q=0.1)={eta_star:.4f}, tuned bound={cor_bound:.4f}")

    rng = np.random.default_rng(0)
    g = mc_gaussian_min(2, np.eye(2), tau=1.0, epsilon=0.0, B=62, trials=100_000, rng=rng)
    c = mc_chisq_ball(10, 20, 3.0, trials=100_000, rng=rng)
    print(f"min-escape frequency: {g.estimate:.4f} <= {g.bound:.4f} (pass={g.passed})")
    print(f"ball-max frequency:   {c.estimate:.4f} <= {c.bound:.4f} (pass={c.passed})")
    return 0 if (ok and g.passed and c.passed) else 1


if __name__ == "__main__":
    sys.exit(main())
