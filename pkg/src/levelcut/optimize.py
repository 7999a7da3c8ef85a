"""The batched round loop: propose, observe, threshold, classify, reweight.

A run makes T+1 batched queries: round 0 is uniform, and each round t >= 1
fits a classifier to the relabeled history, downweights the predicted
above-threshold region, and draws the next batch from the reweighted
proposal.

``sampler_mode`` selects the proposal semantics.  "mw" follows the
multiplicative-weights update exactly (the form the convergence bound
analyzes; required for theory validation runs).  "survivor", the default
for optimization, eliminates cut points outright, which compounds the
threshold ratchet and concentrates far faster than the (1-eta) soft update
can within a few rounds.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from typing import Callable, Optional, Union

import numpy as np

from .classify import (
    BootstrapLinearConfig,
    BootstrapLinearLabeler,
    CssLinearLabeler,
    OracleSublevel,
    TreeEnsemble,
    TreeEnsembleConfig,
)
from .core import (
    ContinuousBox,
    DiscreteSpace,
    LabeledSet,
    Observation,
    RoundRecord,
    RunTrace,
    SeedPolicy,
    median_threshold,
    relabel_history,
)
from .objectives import eval_batch
from .sample import (
    DiscreteWeights,
    ParticleState,
    coverage_vector,
    draw_continuous,
    draw_discrete,
    mw_update_vector,
)

CLASSIFIERS = ("tree", "bootstrap-linear", "css-linear", "oracle")
THRESHOLD_POLICIES = ("latest-batch", "all-history", "exact-population")
LABELINGS = ("values", "pairwise")


@dataclass
class PairwiseConfig:
    """Comparison-feedback labeling: c comparators per point, drawn uniformly
    from the current batch (self-comparison allowed, g(x,x)=0)."""

    c: int = 10

    def __post_init__(self):
        if self.c < 1:
            raise ValueError("c must be >= 1")


@dataclass
class OptimizerConfig:
    T: int
    n: int
    eta: float = 0.5
    classifier: str = "tree"
    threshold_policy: str = "latest-batch"
    labeling: str = "values"
    pairwise: PairwiseConfig = field(default_factory=PairwiseConfig)
    tree: TreeEnsembleConfig = field(default_factory=TreeEnsembleConfig)
    linear: BootstrapLinearConfig = field(default_factory=BootstrapLinearConfig)
    sampler_mode: str = "survivor"
    bandwidth_factor: float = 0.3
    spread_factor: float = 1.0
    drift_gain: float = 4.0
    oversample: int = 20
    theory_log: bool = False
    store_points: bool = True

    def __post_init__(self):
        if self.T < 0:
            raise ValueError("T must be >= 0")
        if self.n < 2:
            raise ValueError("n must be >= 2")
        if not 0.0 <= self.eta <= 0.5:
            raise ValueError("eta must lie in [0, 1/2]")
        if self.classifier not in CLASSIFIERS:
            raise ValueError(f"unknown classifier {self.classifier!r}")
        if self.threshold_policy not in THRESHOLD_POLICIES:
            raise ValueError(f"unknown threshold policy {self.threshold_policy!r}")
        if self.labeling not in LABELINGS:
            raise ValueError(f"unknown labeling {self.labeling!r}")
        if self.sampler_mode not in ("survivor", "mw"):
            raise ValueError(f"unknown sampler mode {self.sampler_mode!r}")


def pairwise_labels(
    batch: np.ndarray,
    g: Callable[[np.ndarray, np.ndarray], int],
    c: int,
    rng: np.random.Generator,
    all_pairs: bool = False,
    pool: Optional[np.ndarray] = None,
) -> np.ndarray:
    """Label each point 1 (cut) iff more than half its comparators beat it.

    g(a, b) = 1 iff f(a) < f(b).  Comparators are drawn uniformly from
    ``pool`` (the current batch by default; self-comparison allowed and
    counts as a loss for the comparator).  ``all_pairs`` compares against
    every other pool point deterministically, which reproduces exact
    lower-median threshold labels on distinct values.
    """
    batch = np.atleast_2d(batch)
    pool = batch if pool is None else np.atleast_2d(pool)
    k = pool.shape[0]
    if k < 2:
        raise ValueError("pairwise labeling needs a comparator pool of at least 2 points")
    labels = np.zeros(batch.shape[0], dtype=np.int8)
    for i in range(batch.shape[0]):
        if all_pairs:
            comparators = [
                j for j in range(k) if not np.array_equal(pool[j], batch[i])
            ]
        else:
            comparators = rng.integers(0, k, size=c)
        wins = sum(int(g(pool[j], batch[i])) for j in comparators)
        labels[i] = 1 if wins / len(comparators) > 0.5 else 0
    return labels


def _value_comparator(X: np.ndarray, y: np.ndarray) -> Callable:
    """Black-box pairwise oracle g(a, b) = 1{f(a) < f(b)} over known rows."""
    table = {row.tobytes(): float(val) for row, val in zip(np.atleast_2d(X), y)}

    def g(a: np.ndarray, b: np.ndarray) -> int:
        return int(table[a.tobytes()] < table[b.tobytes()])

    return g


def _population_threshold(values_table: np.ndarray, weights: DiscreteWeights) -> float:
    """Largest value v with current mass{f <= v} <= 1/2.

    Cutting strictly above this threshold removes at least half the current
    proposal mass, the premise of the exact-classifier halving argument.
    Falls back to the minimum value when the best atom alone already holds
    more than half the mass (nothing above it can be cut at rate 1/2).
    """
    p = weights.probabilities()
    uvals = np.unique(values_table)
    mass = np.zeros(len(uvals))
    pos = np.searchsorted(uvals, values_table)
    np.add.at(mass, pos, p)
    cmass = np.cumsum(mass)
    ok = np.nonzero(cmass <= 0.5 + 1e-12)[0]
    if len(ok) == 0:
        return float(uvals[0])
    return float(uvals[ok[-1]])


def _make_labeler(cfg: OptimizerConfig):
    if cfg.classifier == "tree":
        return TreeEnsemble(cfg.tree)
    if cfg.classifier == "bootstrap-linear":
        return BootstrapLinearLabeler(cfg.linear)
    if cfg.classifier == "css-linear":
        return CssLinearLabeler()
    raise ValueError(f"classifier {cfg.classifier!r} has no generic labeler")


def _as_policy(seed: Union[int, SeedPolicy]) -> SeedPolicy:
    return seed if isinstance(seed, SeedPolicy) else SeedPolicy(int(seed))


def _space_info(space) -> dict:
    if isinstance(space, DiscreteSpace):
        return {"type": "discrete", "size": space.n, "d": space.d}
    return {"type": "box", "lo": space.lo.tolist(), "hi": space.hi.tolist()}


class _LabelAccumulator:
    """History labels under either labeling mode.

    Value mode relabels the full history against the current threshold each
    round.  Pairwise mode relabels the full history each round too, but by
    sampled comparisons against the current batch: a point is cut when more
    than half of its c comparators beat it, the comparison analogue of
    sitting above the batch median.
    """

    def __init__(self, cfg: OptimizerConfig, rng: np.random.Generator):
        self.cfg = cfg
        self.rng = rng
        self.history: list = []
        self._last_X: Optional[np.ndarray] = None
        self.comparisons = 0

    def add_batch(self, X: np.ndarray, y: np.ndarray):
        self.history.extend(Observation(x=row, y=float(v)) for row, v in zip(X, y))
        self._last_X = np.atleast_2d(X)

    def labeled(self, alpha: Optional[float]) -> LabeledSet:
        if self.cfg.labeling == "pairwise":
            HX = np.stack([obs.x for obs in self.history])
            Hy = np.array([obs.y for obs in self.history])
            g = _value_comparator(HX, Hy)
            z = pairwise_labels(
                HX, g, self.cfg.pairwise.c, self.rng, pool=self._last_X
            )
            self.comparisons += self.cfg.pairwise.c * len(HX)
            return LabeledSet(X=HX, z=z, alpha=None)
        return relabel_history(self.history, alpha)

    def threshold(self, last_values: np.ndarray) -> Optional[float]:
        if self.cfg.labeling == "pairwise":
            return None
        if self.cfg.threshold_policy == "all-history":
            return median_threshold([obs.y for obs in self.history])
        return median_threshold(last_values)


def run_classify_opt(
    objective,
    space,
    cfg: OptimizerConfig,
    seed: Union[int, SeedPolicy],
    method_label: Optional[str] = None,
) -> RunTrace:
    """Algorithm: uniform round 0, then T classifier-guided rounds.

    Total objective evaluations are n * (T + 1).  The returned trace ends
    with the argmin record of the final batch.
    """
    label = method_label or f"classify-{cfg.classifier}"
    policy = _as_policy(seed)
    rng = policy.rng("run", label)
    if isinstance(space, DiscreteSpace):
        return _run_discrete(objective, space, cfg, policy, rng, label)
    if isinstance(space, ContinuousBox):
        if cfg.threshold_policy == "exact-population":
            raise ValueError("exact-population thresholds need a discrete space")
        return _run_continuous(objective, space, cfg, policy, rng, label)
    raise TypeError(f"unsupported action space {type(space)!r}")


def _finish_trace(trace: RunTrace, last_X, last_y, space) -> RunTrace:
    i_star = int(np.argmin(last_y))
    final = {
        "argmin_value": float(last_y[i_star]),
        "best_value": float(trace.rounds[-1].best_so_far),
        "evals": int(trace.rounds[-1].evals),
    }
    if isinstance(space, DiscreteSpace):
        idx = int(trace.rounds[-1].indices[i_star])
        final["argmin_index"] = idx
        final["argmin_id"] = space.ids[idx]
    else:
        final["argmin_x"] = np.asarray(last_X[i_star]).tolist()
    trace.final = final
    return trace


def _run_discrete(objective, space, cfg, policy, rng, label) -> RunTrace:
    needs_table = (
        cfg.classifier == "oracle"
        or cfg.theory_log
        or cfg.threshold_policy == "exact-population"
    )
    # Oracle access to the full value table is a theory-validation device and
    # is not charged to the run's evaluation budget.
    values_table = eval_batch(objective, space.features) if needs_table else None

    weights = DiscreteWeights.uniform(space.n, cfg.eta)
    acc = _LabelAccumulator(cfg, rng)
    trace = RunTrace(
        method=label,
        rounds=[],
        config_snapshot=dataclasses.asdict(cfg),
        seed=policy.as_dict(),
        space_info=_space_info(space),
        values_table=values_table if cfg.theory_log else None,
        eta=cfg.eta,
    )

    evals = 0
    best = np.inf

    def observe(t, idx, alpha=None, cov=None, hvec=None, warn=()):
        nonlocal evals, best
        X = space.features[idx]
        y = eval_batch(objective, X)
        evals += len(idx)
        best = min(best, float(y.min()))
        acc.add_batch(X, y)
        rec = RoundRecord(
            t=t,
            values=y,
            best_so_far=best,
            evals=evals,
            indices=np.asarray(idx, dtype=int),
            alpha=alpha,
            coverage=cov,
            comparisons=acc.comparisons,
            warnings=list(warn),
            h_vector=hvec if cfg.theory_log else None,
            log_weights=weights.log_w.copy() if cfg.theory_log else None,
        )
        trace.rounds.append(rec)
        return X, y

    idx0 = draw_discrete(weights, cfg.n, rng)
    X, y = observe(0, idx0)

    for t in range(1, cfg.T + 1):
        if cfg.threshold_policy == "exact-population":
            alpha = _population_threshold(values_table, weights)
        else:
            alpha = acc.threshold(y)

        if cfg.classifier == "oracle":
            if alpha is None:
                raise ValueError("oracle classifier needs a numeric threshold")
            hvec = (values_table > alpha).astype(np.int8)
        else:
            labeler = _make_labeler(cfg).fit(acc.labeled(alpha), rng)
            hvec = np.asarray(labeler.effective_h(space.features), dtype=np.int8)

        cov = coverage_vector(weights, hvec)
        warn = []
        if cfg.sampler_mode == "survivor":
            # hard elimination: cut points never come back; keep the old
            # weights when a round would wipe out everything
            new_log_w = np.where(hvec == 1, -np.inf, weights.log_w)
            if np.all(np.isneginf(new_log_w)):
                warn.append(f"round {t}: classifier cut every point; update skipped")
            else:
                weights = DiscreteWeights(log_w=new_log_w, eta=cfg.eta)
        else:
            weights = mw_update_vector(weights, hvec)
        idx = draw_discrete(weights, cfg.n, rng)
        X, y = observe(t, idx, alpha=alpha, cov=cov, hvec=hvec, warn=warn)

    return _finish_trace(trace, X, y, space)


def _run_continuous(objective, space, cfg, policy, rng, label) -> RunTrace:
    state = ParticleState(
        box=space,
        eta=cfg.eta,
        bandwidth=cfg.bandwidth_factor * space.side,
        oversample=cfg.oversample,
        mode=cfg.sampler_mode,
        spread_factor=cfg.spread_factor,
        drift_gain=cfg.drift_gain,
    )
    acc = _LabelAccumulator(cfg, rng)
    trace = RunTrace(
        method=label,
        rounds=[],
        config_snapshot=dataclasses.asdict(cfg),
        seed=policy.as_dict(),
        space_info=_space_info(space),
        eta=cfg.eta,
    )

    evals = 0
    best = np.inf

    def observe(t, X, alpha=None, diag=None):
        nonlocal evals, best
        y = eval_batch(objective, X)
        evals += len(X)
        best = min(best, float(y.min()))
        acc.add_batch(X, y)
        state.append_round(X, y)
        rec = RoundRecord(
            t=t,
            values=y,
            best_so_far=best,
            evals=evals,
            points=np.asarray(X) if cfg.store_points else None,
            alpha=alpha,
            coverage=None if diag is None else diag.coverage,
            ess=None if diag is None else diag.ess,
            bandwidth=None if diag is None else diag.bandwidth.copy(),
            comparisons=acc.comparisons,
            warnings=[] if diag is None else list(diag.warnings),
        )
        trace.rounds.append(rec)
        return y

    X = space.uniform(cfg.n, rng)
    y = observe(0, X)

    for t in range(1, cfg.T + 1):
        alpha = acc.threshold(y)
        labeler = _make_labeler(cfg).fit(acc.labeled(alpha), rng)
        state.append_classifier(labeler)
        X, diag = draw_continuous(state, cfg.n, rng)
        y = observe(t, X, alpha=alpha, diag=diag)
        if diag.coverage is not None:
            state.shrink_bandwidth_if_covered(diag.coverage)

    return _finish_trace(trace, X, y, space)


def run_random(
    objective,
    space,
    n: int,
    T: int,
    seed: Union[int, SeedPolicy],
    method_label: str = "random",
) -> RunTrace:
    """Uniform batches only: T rounds, T*n evaluations."""
    if T < 1:
        raise ValueError("T must be >= 1")
    if n < 1:
        raise ValueError("n must be >= 1")
    policy = _as_policy(seed)
    rng = policy.rng("run", method_label)
    trace = RunTrace(
        method=method_label,
        rounds=[],
        config_snapshot={"T": T, "n": n, "method": method_label},
        seed=policy.as_dict(),
        space_info=_space_info(space),
    )
    evals = 0
    best = np.inf
    discrete = isinstance(space, DiscreteSpace)
    uniform = (
        DiscreteWeights.uniform(space.n, 0.0) if discrete else None
    )
    X = y = None
    for t in range(T):
        if discrete:
            idx = draw_discrete(uniform, n, rng)
            X = space.features[idx]
        else:
            idx = None
            X = space.uniform(n, rng)
        y = eval_batch(objective, X)
        evals += n
        best = min(best, float(y.min()))
        trace.rounds.append(
            RoundRecord(
                t=t,
                values=y,
                best_so_far=best,
                evals=evals,
                indices=None if idx is None else np.asarray(idx, dtype=int),
                points=None if discrete else X,
            )
        )
    return _finish_trace(trace, X, y, space)


def run_random2x(
    objective, space, n: int, T: int, seed: Union[int, SeedPolicy]
) -> RunTrace:
    """Random search with a doubled batch size."""
    return run_random(objective, space, 2 * n, T, seed, method_label="random-2x")
