"""Sublevel-set classifiers: consensus tree ensembles, bootstrapped linear
ensembles, exact version-space decisions for linear hypotheses, and a perfect
oracle for theory experiments.

All classifiers share one decision vocabulary: KEEP (0), CUT (1), ABSTAIN (2).
An abstention never removes a point: ``effective_h`` maps ABSTAIN to 0, so only
confident CUT decisions downweight actions.
"""

from __future__ import annotations

import enum
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.optimize import linprog
from sklearn.tree import DecisionTreeClassifier

from .core import LabeledSet

KEEP = 0
CUT = 1
ABSTAIN = 2


class ConvergenceError(RuntimeError):
    """Raised when an iterative fit stops short of its gradient tolerance."""

    def __init__(self, message: str, grad_norm: float):
        super().__init__(f"{message} (gradient norm {grad_norm:.3e})")
        self.grad_norm = grad_norm


def _augment(X: np.ndarray) -> np.ndarray:
    """Append the constant-1 bias feature."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    return np.hstack([X, np.ones((X.shape[0], 1))])


def _scalarize(out: np.ndarray, was_1d: bool):
    if was_1d:
        return out[0].item() if out.ndim else out.item()
    return out


class SoftLabeler(ABC):
    """A fitted cut/keep/abstain decision rule.

    ``decide`` is deterministic after ``fit``; ``effective_h`` collapses
    ABSTAIN into KEEP so that only confident cuts reach the weight update.
    """

    def fit(self, data: LabeledSet, rng: np.random.Generator) -> "SoftLabeler":
        return self

    @abstractmethod
    def decide(self, X):
        """Decision per point; scalar for a single 1-d point, else an array."""

    def effective_h(self, X):
        dec = self.decide(X)
        if np.isscalar(dec):
            return int(dec == CUT)
        return (np.asarray(dec) == CUT).astype(np.int8)


class OracleSublevel(SoftLabeler):
    """Exact sublevel-set membership: cut iff f(x) > alpha. Never abstains."""

    def __init__(self, fn, alpha: float):
        self.fn = fn
        self.alpha = float(alpha)

    def decide(self, X):
        X = np.asarray(X, dtype=np.float64)
        was_1d = X.ndim == 1
        vals = np.asarray(self.fn(np.atleast_2d(X)))
        out = np.where(vals > self.alpha, CUT, KEEP).astype(np.int8)
        return _scalarize(out, was_1d)


# ---------------------------------------------------------------------------
# Consensus tree ensembles
# ---------------------------------------------------------------------------


@dataclass
class TreeEnsembleConfig:
    n_trees: int = 100
    max_depth: Optional[int] = None
    min_leaf: int = 1
    feature_fraction: Optional[float] = None  # None -> sqrt(d)/d per split
    bootstrap_rows: bool = True
    consensus_tau: float = 0.75

    def __post_init__(self):
        if self.n_trees < 1:
            raise ValueError("n_trees must be >= 1")
        if not 0.5 < self.consensus_tau <= 1.0:
            raise ValueError("consensus_tau must lie in (0.5, 1]")


class TreeEnsemble(SoftLabeler):
    """Bagged CART trees with a supermajority consensus decision.

    A definite decision requires at least a ``consensus_tau`` fraction of
    trees to agree on the label; anything in between abstains.
    """

    def __init__(self, cfg: TreeEnsembleConfig):
        self.cfg = cfg
        self.trees = []

    def fit(self, data: LabeledSet, rng: np.random.Generator) -> "TreeEnsemble":
        X, z = data.X, data.z
        m, d = X.shape
        max_features = self.cfg.feature_fraction
        if max_features is None:
            max_features = "sqrt"
        self.trees = []
        for _ in range(self.cfg.n_trees):
            if self.cfg.bootstrap_rows:
                rows = rng.integers(0, m, size=m)
            else:
                rows = np.arange(m)
            tree = DecisionTreeClassifier(
                criterion="gini",
                max_depth=self.cfg.max_depth,
                min_samples_leaf=self.cfg.min_leaf,
                max_features=max_features,
                random_state=int(rng.integers(0, 2**31 - 1)),
            )
            tree.fit(X[rows], z[rows])
            self.trees.append(tree)
        return self

    def vote_fraction(self, X) -> np.ndarray:
        """Fraction of trees voting label 1, per point."""
        if not self.trees:
            raise RuntimeError("ensemble is not fitted")
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        votes = np.zeros(X.shape[0])
        for tree in self.trees:
            votes += tree.predict(X)
        return votes / len(self.trees)

    def decide(self, X, tau: Optional[float] = None):
        X = np.asarray(X, dtype=np.float64)
        was_1d = X.ndim == 1
        tau = self.cfg.consensus_tau if tau is None else tau
        frac = self.vote_fraction(X)
        out = np.full(frac.shape, ABSTAIN, dtype=np.int8)
        out[frac >= tau] = CUT
        out[frac <= 1.0 - tau] = KEEP
        return _scalarize(out, was_1d)


def fit_tree_ensemble(
    data: LabeledSet, cfg: TreeEnsembleConfig, rng: np.random.Generator
) -> TreeEnsemble:
    return TreeEnsemble(cfg).fit(data, rng)


def consensus_decide(ensemble: TreeEnsemble, x, tau: float):
    """Consensus decision of a fitted ensemble at ``x`` for a given tau."""
    return ensemble.decide(x, tau=tau)


# ---------------------------------------------------------------------------
# Logistic fits and the multiplier bootstrap
# ---------------------------------------------------------------------------


def _newton_logistic(
    Xa: np.ndarray,
    z: np.ndarray,
    sample_weights: np.ndarray,
    ridge: float,
    tol: float,
    max_iter: int,
) -> np.ndarray:
    """Damped Newton on weighted, ridge-regularized logistic loss.

    Minimizes (1/n) sum_i w_i * nll_i(theta) + (ridge/2)||theta||^2 until the
    gradient norm is <= tol.
    """
    n, p = Xa.shape
    w = sample_weights / n
    theta = np.zeros(p)

    def objective(th):
        s = Xa @ th
        nll = np.logaddexp(0.0, s) - z * s
        return float(w @ nll + 0.5 * ridge * th @ th)

    obj = objective(theta)
    for _ in range(max_iter):
        s = Xa @ theta
        prob = 1.0 / (1.0 + np.exp(-np.clip(s, -500, 500)))
        grad = Xa.T @ (w * (prob - z)) + ridge * theta
        gnorm = float(np.linalg.norm(grad))
        if gnorm <= tol:
            return theta
        curv = w * prob * (1.0 - prob)
        H = (Xa.T * curv) @ Xa + ridge * np.eye(p)
        step = np.linalg.solve(H, grad)
        # backtrack if the full Newton step overshoots
        scale = 1.0
        for _ in range(50):
            cand = theta - scale * step
            cand_obj = objective(cand)
            if cand_obj <= obj + 1e-14:
                theta, obj = cand, cand_obj
                break
            scale *= 0.5
        else:
            break
    s = Xa @ theta
    prob = 1.0 / (1.0 + np.exp(-np.clip(s, -500, 500)))
    grad = Xa.T @ (w * (prob - z)) + ridge * theta
    gnorm = float(np.linalg.norm(grad))
    if gnorm <= tol:
        return theta
    raise ConvergenceError("logistic fit did not converge", gnorm)


def fit_logistic_mle(
    data: LabeledSet,
    ridge: float = 1e-2,
    tol: float = 1e-8,
    max_iter: int = 100,
) -> np.ndarray:
    """Ridge-regularized logistic maximum likelihood on bias-augmented features.

    Returns theta of length d+1 (bias last).
    """
    Xa = _augment(data.X)
    z = data.z.astype(np.float64)
    return _newton_logistic(Xa, z, np.ones(len(z)), ridge, tol, max_iter)


@dataclass
class BootstrapLinearConfig:
    """Multiplier-bootstrap ensemble of linear classifiers.

    ``sigma`` inflates each resampled fit away from the base fit to widen the
    ensemble's spread.  The default 2.0 keeps the unanimous consensus able to
    cut in moderate dimension; sigma=None switches to the dimension-scaled
    rule sqrt(d) + 1, which is far more conservative.
    """

    B: int = 62
    sigma: Optional[float] = 2.0
    ridge: float = 1e-2
    tol: float = 1e-8
    max_iter: int = 100

    def __post_init__(self):
        if self.B < 1:
            raise ValueError("B must be >= 1")
        if self.sigma is not None and self.sigma < 1.0:
            raise ValueError("sigma must be >= 1")
        if self.ridge < 0:
            raise ValueError("ridge must be >= 0")


def multiplier_bootstrap(
    data: LabeledSet,
    cfg: BootstrapLinearConfig,
    rng: np.random.Generator,
    mle: Optional[np.ndarray] = None,
) -> np.ndarray:
    """B inflated refits: theta_b = sigma * (theta_u - mle) + mle.

    Each refit reweights the loss with per-example weights 1 + u_i,
    u_i ~ Uniform[-1, 1].  A resample whose positive-weight examples all
    carry one label retries with fresh u, at most 10 times.
    """
    Xa = _augment(data.X)
    z = data.z.astype(np.float64)
    if mle is None:
        mle = _newton_logistic(Xa, z, np.ones(len(z)), cfg.ridge, cfg.tol, cfg.max_iter)
    sigma = cfg.sigma if cfg.sigma is not None else np.sqrt(data.X.shape[1]) + 1.0
    thetas = np.empty((cfg.B, Xa.shape[1]))
    for b in range(cfg.B):
        for attempt in range(10):
            u = rng.uniform(-1.0, 1.0, size=len(z))
            weights = 1.0 + u
            active = weights > 0
            if z[active].min(initial=1) < 1 and z[active].max(initial=0) > 0:
                break
        else:
            raise ValueError(
                "degenerate weighted problem: all effective weights on one class"
            )
        theta_u = _newton_logistic(Xa, z, weights, cfg.ridge, cfg.tol, cfg.max_iter)
        thetas[b] = sigma * (theta_u - mle) + mle
    return thetas


def consensus_linear(thetas: np.ndarray, x):
    """Unanimous linear consensus: CUT iff every member scores > 0,
    KEEP iff every member scores <= 0, otherwise ABSTAIN.

    ``x`` must already carry the bias coordinate.
    """
    thetas = np.atleast_2d(thetas)
    if thetas.shape[0] == 0:
        raise ValueError("thetas must be nonempty")
    X = np.asarray(x, dtype=np.float64)
    was_1d = X.ndim == 1
    scores = np.atleast_2d(X) @ thetas.T
    cut = np.all(scores > 0, axis=1)
    keep = np.all(scores <= 0, axis=1)
    out = np.full(scores.shape[0], ABSTAIN, dtype=np.int8)
    out[cut] = CUT
    out[keep] = KEEP
    return _scalarize(out, was_1d)


class BootstrapLinearLabeler(SoftLabeler):
    """Multiplier-bootstrap linear ensemble behind the SoftLabeler interface."""

    def __init__(self, cfg: BootstrapLinearConfig):
        self.cfg = cfg
        self.mle: Optional[np.ndarray] = None
        self.thetas: Optional[np.ndarray] = None

    def fit(self, data: LabeledSet, rng: np.random.Generator) -> "BootstrapLinearLabeler":
        Xa = _augment(data.X)
        z = data.z.astype(np.float64)
        self.mle = _newton_logistic(
            Xa, z, np.ones(len(z)), self.cfg.ridge, self.cfg.tol, self.cfg.max_iter
        )
        self.thetas = multiplier_bootstrap(data, self.cfg, rng, mle=self.mle)
        return self

    def decide(self, X):
        if self.thetas is None:
            raise RuntimeError("labeler is not fitted")
        X = np.asarray(X, dtype=np.float64)
        was_1d = X.ndim == 1
        out = consensus_linear(self.thetas, _augment(X))
        return _scalarize(np.atleast_1d(out), was_1d)


# ---------------------------------------------------------------------------
# Exact consistent-selective decisions for linear hypotheses
# ---------------------------------------------------------------------------


class VersionSpaceDecision(enum.Enum):
    POS = "pos"
    NEG = "neg"
    DISAGREE = "disagree"


_MARGIN_TOL = 1e-9


def _max_margin(rows: np.ndarray) -> float:
    """Largest m such that rows @ theta >= m has a solution with |theta| <= 1.

    Rows are normalized to unit length, so m > 0 certifies strict feasibility
    of the corresponding open halfspace system.
    """
    norms = np.linalg.norm(rows, axis=1, keepdims=True)
    A = rows / norms
    p = A.shape[1]
    # variables (theta, m); maximize m subject to A theta - m >= 0
    c = np.zeros(p + 1)
    c[-1] = -1.0
    A_ub = np.hstack([-A, np.ones((A.shape[0], 1))])
    b_ub = np.zeros(A.shape[0])
    bounds = [(-1.0, 1.0)] * p + [(0.0, 1.0)]
    res = linprog(c, A_ub=A_ub, b_ub=b_ub, bounds=bounds, method="highs")
    if res.status != 0:
        raise RuntimeError(f"margin LP failed with status {res.status}")
    return float(-res.fun)


def css_linear_decide(data: LabeledSet, x, tol: float = _MARGIN_TOL) -> VersionSpaceDecision:
    """Consistent-selective decision over bias-augmented linear separators.

    POS when no hypothesis consistent with the sample labels x negative, NEG
    when none labels it positive, DISAGREE when both labelings admit a
    consistent hypothesis.  Raises when the sample itself is not linearly
    separable.
    """
    Xa = _augment(data.X)
    signs = (2.0 * data.z.astype(np.float64) - 1.0)[:, None]
    train_rows = signs * Xa
    if _max_margin(train_rows) <= tol:
        raise ValueError("non-realizable sample")
    xa = _augment(np.asarray(x, dtype=np.float64))[0]
    pos_ok = _max_margin(np.vstack([train_rows, xa])) > tol
    neg_ok = _max_margin(np.vstack([train_rows, -xa])) > tol
    if pos_ok and neg_ok:
        return VersionSpaceDecision.DISAGREE
    if pos_ok:
        return VersionSpaceDecision.POS
    if neg_ok:
        return VersionSpaceDecision.NEG
    # every consistent separator passes exactly through x
    return VersionSpaceDecision.DISAGREE


_CSS_TO_DECISION = {
    VersionSpaceDecision.POS: CUT,
    VersionSpaceDecision.NEG: KEEP,
    VersionSpaceDecision.DISAGREE: ABSTAIN,
}


class CssLinearLabeler(SoftLabeler):
    """Exact version-space consensus as a (slow, per-point) labeler."""

    def __init__(self, tol: float = _MARGIN_TOL):
        self.tol = tol
        self.data: Optional[LabeledSet] = None

    def fit(self, data: LabeledSet, rng=None) -> "CssLinearLabeler":
        self.data = data
        return self

    def decide(self, X):
        if self.data is None:
            raise RuntimeError("labeler is not fitted")
        X = np.asarray(X, dtype=np.float64)
        was_1d = X.ndim == 1
        rows = np.atleast_2d(X)
        out = np.array(
            [
                _CSS_TO_DECISION[css_linear_decide(self.data, row, tol=self.tol)]
                for row in rows
            ],
            dtype=np.int8,
        )
        return _scalarize(out, was_1d)
