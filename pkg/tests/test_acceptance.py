"""Acceptance gate: each criterion runs at its stated tolerance and prints
one PASS/FAIL line.  Run with ``pytest tests/test_acceptance.py -v -s``.
"""

import math
import time

import numpy as np
import pytest

from levelcut.classify import (
    CUT,
    BootstrapLinearConfig,
    VersionSpaceDecision,
    consensus_linear,
    css_linear_decide,
    multiplier_bootstrap,
)
from levelcut.cli import config_from_dict, run_experiment, run_single
from levelcut.core import LabeledSet, SeedPolicy, median_threshold
from levelcut.objectives import gen_random_linear, gen_synthetic_pbm
from levelcut.optimize import OptimizerConfig, run_classify_opt
from levelcut.theory import (
    exact_classifier_log_floor,
    exact_log_prob,
    mc_chisq_ball,
    mc_gaussian_min,
    verify_weight_bound,
)

from conftest import make_discrete_linear

N_SEEDS_THEORY = 50
REPLICATES = 15
BASE_SEED = 0


def _report(name, ok, detail=""):
    status = "PASS" if ok else "FAIL"
    print(f"\nACCEPTANCE {name}: {status} {detail}")
    return ok


# ---------------------------------------------------------------------------
# Criteria 1 and 2 share 50 fully logged oracle runs.
# ---------------------------------------------------------------------------


@pytest.fixture(scope="session")
def oracle_runs():
    start = time.perf_counter()
    runs = []
    cfg = OptimizerConfig(
        T=10,
        n=64,
        eta=0.5,
        classifier="oracle",
        threshold_policy="exact-population",
        sampler_mode="mw",
        theory_log=True,
    )
    for s in range(N_SEEDS_THEORY):
        objective, space = make_discrete_linear(num_points=1024, d=16, seed=s)
        trace = run_classify_opt(objective, space, cfg, SeedPolicy(s, 0))
        x_star = int(np.argmin(objective.evaluate(space.features)))
        runs.append((trace, x_star))
    return runs, time.perf_counter() - start


def test_criterion_1_weight_bound_holds_on_every_seed(oracle_runs):
    runs, elapsed = oracle_runs
    worst = math.inf
    for trace, x_star in runs:
        report = verify_weight_bound(trace, x_star)
        worst = min(worst, min(r["slack"] for r in report.rows))
        assert report.verdict
    ok = worst >= -1e-9 and elapsed < 10.0
    assert _report(
        "1 weight lower bound (50 seeds)",
        ok,
        f"min slack {worst:.3e}, runtime {elapsed:.1f}s",
    )


def test_criterion_2_exact_classifier_floor(oracle_runs):
    runs, elapsed = oracle_runs
    floor = exact_classifier_log_floor(0.5, 10, 1024)
    margin = math.inf
    for trace, x_star in runs:
        log_p = exact_log_prob(trace, x_star)
        margin = min(margin, log_p - floor)
        assert log_p >= floor + math.log1p(-1e-9)
    ok = elapsed < 10.0
    assert _report(
        "2 halving floor at the optimum (50 seeds)",
        ok,
        f"min log-margin {margin:.4f}, shared runtime {elapsed:.1f}s",
    )


# ---------------------------------------------------------------------------
# Criteria 3 and 5: the d=30 random-linear benchmark at desk scale.
# ---------------------------------------------------------------------------


def _linear30_config(methods):
    return config_from_dict(
        {
            "problem": {"objective": "random-linear", "d": 30},
            "methods": methods,
            "rounds": 10,
            "batch_size": 100,
            "replicates": REPLICATES,
            "base_seed": BASE_SEED,
            "output_dir": "unused",
        }
    )


def _collect(config):
    out = {}
    for method in config.methods:
        traces = [
            run_single(config, method, r) for r in range(config.replicates)
        ]
        out[method["label"]] = [t.rounds[-1].best_so_far for t in traces]
    return out


@pytest.fixture(scope="session")
def linear30_runs():
    start = time.perf_counter()
    config = _linear30_config(
        ["classify-tuned", "classify-rf", "random", "random-2x"]
    )
    finals = _collect(config)
    return finals, time.perf_counter() - start


@pytest.fixture(scope="session")
def linear30_pairwise_runs():
    start = time.perf_counter()
    config = _linear30_config([{"name": "pairwise", "c": 10, "classifier": "rf"}])
    finals = _collect(config)
    return finals["pairwise-rf-c10"], time.perf_counter() - start


def test_criterion_3_linear_benchmark_beats_baselines(linear30_runs):
    finals, elapsed = linear30_runs
    tuned, rf = finals["classify-tuned"], finals["classify-rf"]
    rand, rand2x = finals["random"], finals["random-2x"]
    wins_tuned = sum(a < b for a, b in zip(tuned, rand2x))
    wins_rf = sum(a < b for a, b in zip(rf, rand))
    med = {k: float(np.median(v)) for k, v in finals.items()}
    ok = (
        wins_tuned >= 12
        and wins_rf >= 12
        and med["classify-tuned"] < med["random-2x"]
        and med["classify-rf"] < med["random"]
        and elapsed < 300.0
    )
    assert _report(
        "3 linear d=30 benchmark",
        ok,
        f"tuned>rand2x {wins_tuned}/15, rf>rand {wins_rf}/15, "
        f"medians tuned {med['classify-tuned']:.3f} rf {med['classify-rf']:.3f} "
        f"rand {med['random']:.3f} rand2x {med['random-2x']:.3f}, "
        f"runtime {elapsed:.0f}s",
    )


def test_criterion_5_pairwise_feedback_matches_values(
    linear30_runs, linear30_pairwise_runs
):
    finals, _ = linear30_runs
    pairwise, elapsed = linear30_pairwise_runs
    med_pair = float(np.median(pairwise))
    med_full = float(np.median(finals["classify-rf"]))
    med_rand = float(np.median(finals["random"]))
    scale = med_rand - med_full  # how far the full-value method is ahead
    gap = med_pair - med_full  # positive when pairwise trails
    ok = scale > 0 and gap <= 0.10 * scale and elapsed < 300.0
    assert _report(
        "5 pairwise c=10 within 10% of full values",
        ok,
        f"gap {gap:.3f} vs allowed {0.10 * scale:.3f} "
        f"(pairwise {med_pair:.3f}, full {med_full:.3f}, random {med_rand:.3f}), "
        f"runtime {elapsed:.0f}s",
    )


# ---------------------------------------------------------------------------
# Criterion 4: synthetic 8-mer binding landscape.
# ---------------------------------------------------------------------------


def test_criterion_4_synthetic_binding_landscape():
    start = time.perf_counter()
    config = config_from_dict(
        {
            "problem": {"objective": "pbm-synthetic"},
            "methods": ["classify-rf", "random-2x"],
            "rounds": 10,
            "batch_size": 100,
            "replicates": REPLICATES,
            "base_seed": BASE_SEED,
            "output_dir": "unused",
        }
    )
    wins = 0
    in_top = 0
    for r in range(config.replicates):
        problem = gen_synthetic_pbm(SeedPolicy(BASE_SEED, r).rng("problem"))
        values = problem.objective_values()
        cutoff = np.sort(values)[int(0.001 * problem.n)]
        best_rf = run_single(config, config.methods[0], r).rounds[-1].best_so_far
        best_r2 = run_single(config, config.methods[1], r).rounds[-1].best_so_far
        wins += best_rf < best_r2
        in_top += best_rf <= cutoff
    elapsed = time.perf_counter() - start
    ok = wins >= 12 and in_top >= 8 and elapsed < 600.0
    assert _report(
        "4 synthetic binding landscape",
        ok,
        f"rf>rand2x {wins}/15, top-0.1% hits {in_top}/15, runtime {elapsed:.0f}s",
    )


# ---------------------------------------------------------------------------
# Criterion 6: consensus safety on a planted 2-d problem.
# ---------------------------------------------------------------------------


def test_criterion_6_bootstrap_consensus_safety():
    start = time.perf_counter()
    seeds = 200
    n = 30
    consensus_cuts = 0
    css_cuts = 0
    cfg = BootstrapLinearConfig(B=62)  # sigma and ridge at defaults
    for s in range(seeds):
        rng = SeedPolicy(1000, s).rng("safety")
        objective = gen_random_linear(2, rng)
        X = rng.uniform(-1, 1, size=(n, 2))
        y = objective.evaluate(X)
        alpha = median_threshold(y)
        z = (y > alpha).astype(np.int8)
        data = LabeledSet(X=X, z=z, alpha=alpha)
        x_star = objective.argmin
        thetas = multiplier_bootstrap(data, cfg, rng)
        if consensus_linear(thetas, np.append(x_star, 1.0)) == CUT:
            consensus_cuts += 1
        if css_linear_decide(data, x_star) == VersionSpaceDecision.POS:
            css_cuts += 1
    elapsed = time.perf_counter() - start
    rate = consensus_cuts / seeds
    limit = 0.05 + 3 * math.sqrt(0.05 * 0.95 / seeds)
    ok = rate <= limit and css_cuts == 0 and elapsed < 60.0
    assert _report(
        "6 bootstrap consensus never cuts the optimum",
        ok,
        f"consensus rate {rate:.3f} (limit {limit:.3f}), exact-decision cuts "
        f"{css_cuts}, runtime {elapsed:.0f}s",
    )


# ---------------------------------------------------------------------------
# Criterion 7: Monte-Carlo validation of the Gaussian sampling inequalities.
# ---------------------------------------------------------------------------


def test_criterion_7_monte_carlo_inequalities():
    start = time.perf_counter()
    trials = 100_000
    reports = {
        "min escape, B=1 tau=0": mc_gaussian_min(
            1, np.eye(1), 0.0, 0.0, 1, trials, np.random.default_rng(10)
        ),
        "min escape, B=3 eps large": mc_gaussian_min(
            2, np.eye(2), 0.0, 8.0, 3, trials, np.random.default_rng(11)
        ),
        "min escape, B=62 tau=1": mc_gaussian_min(
            2, np.eye(2), 1.0, 0.0, 62, trials, np.random.default_rng(12)
        ),
        "ball max, d=10 B=20 c=3": mc_chisq_ball(
            10, 20, 3.0, trials, np.random.default_rng(13)
        ),
        "ball max, d=4 B=1 c~1": mc_chisq_ball(
            4, 1, 1.0 + 1e-9, trials, np.random.default_rng(14)
        ),
        "ball max, d=3 B=2 c=30": mc_chisq_ball(
            3, 2, 30.0, trials, np.random.default_rng(15)
        ),
    }
    elapsed = time.perf_counter() - start
    all_ok = all(rep.passed for rep in reports.values())
    b62 = reports["min escape, B=62 tau=1"]
    delta_ok = b62.estimate <= 0.05 + 3 * b62.stderr
    ok = all_ok and delta_ok and elapsed < 30.0
    detail = "; ".join(
        f"{name}: {rep.estimate:.4f} <= {rep.bound:.4f}" for name, rep in reports.items()
    )
    assert _report(
        "7 Monte-Carlo tail inequalities", ok, f"{detail}; runtime {elapsed:.0f}s"
    )


# ---------------------------------------------------------------------------
# Criterion 8: byte-identical reruns.
# ---------------------------------------------------------------------------


def test_criterion_8_experiments_are_deterministic(tmp_path):
    out = tmp_path / "det"
    raw = {
        "problem": {"objective": "random-linear", "d": 6, "discretize": 128},
        "methods": ["classify-rf", "classify-tuned", "random", "random-2x"],
        "rounds": 3,
        "batch_size": 16,
        "replicates": 2,
        "base_seed": 3,
        "output_dir": str(out),
    }
    config = config_from_dict(raw)
    run_experiment(config, workers=1)
    first = {
        p.relative_to(out).as_posix(): p.read_bytes()
        for p in sorted(out.rglob("*"))
        if p.is_file()
    }
    run_experiment(config, workers=1)
    second = {
        p.relative_to(out).as_posix(): p.read_bytes()
        for p in sorted(out.rglob("*"))
        if p.is_file()
    }

    cont_out = tmp_path / "det-cont"
    raw_cont = dict(raw, problem={"objective": "random-linear", "d": 4}, output_dir=str(cont_out))
    config_cont = config_from_dict(raw_cont)
    run_experiment(config_cont, workers=1)
    first_c = {
        p.relative_to(cont_out).as_posix(): p.read_bytes()
        for p in sorted(cont_out.rglob("*"))
        if p.is_file()
    }
    run_experiment(config_cont, workers=1)
    second_c = {
        p.relative_to(cont_out).as_posix(): p.read_bytes()
        for p in sorted(cont_out.rglob("*"))
        if p.is_file()
    }
    ok = first == second and first_c == second_c and len(first) > 0
    assert _report(
        "8 byte-identical reruns",
        ok,
        f"{len(first)} discrete + {len(first_c)} continuous artifacts compared",
    )
