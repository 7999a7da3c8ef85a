"""Shared domain model: action spaces, observations, labels, traces, seeding."""

from __future__ import annotations

import zlib
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np


@dataclass(frozen=True)
class DiscreteSpace:
    """A finite set of candidate actions with feature vectors.

    ``ids`` are stable, unique identifiers (ints or strings); ``features``
    is an (N, d) array whose row order defines the canonical point order
    used by weight vectors and inverse-CDF sampling.
    """

    ids: tuple
    features: np.ndarray

    def __post_init__(self):
        feats = np.asarray(self.features, dtype=np.float64)
        if feats.ndim != 2:
            raise ValueError("features must be a 2-d array")
        if len(self.ids) != feats.shape[0]:
            raise ValueError("ids and features length mismatch")
        if feats.shape[0] < 2:
            raise ValueError("a discrete space needs at least 2 points")
        if len(set(self.ids)) != len(self.ids):
            raise ValueError("duplicate action")
        object.__setattr__(self, "features", feats)
        self.features.setflags(write=False)

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def d(self) -> int:
        return self.features.shape[1]


@dataclass(frozen=True)
class ContinuousBox:
    """An axis-aligned box [lo, hi] in R^d."""

    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        lo = np.asarray(self.lo, dtype=np.float64)
        hi = np.asarray(self.hi, dtype=np.float64)
        if lo.shape != hi.shape or lo.ndim != 1:
            raise ValueError("lo and hi must be 1-d arrays of equal length")
        if not np.all(lo < hi):
            raise ValueError("box requires lo[j] < hi[j] for all j")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)
        self.lo.setflags(write=False)
        self.hi.setflags(write=False)

    @property
    def d(self) -> int:
        return self.lo.shape[0]

    @property
    def side(self) -> np.ndarray:
        return self.hi - self.lo

    def uniform(self, n: int, rng: np.random.Generator) -> np.ndarray:
        return rng.uniform(self.lo, self.hi, size=(n, self.d))

    def contains(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(X)
        return np.all((X >= self.lo) & (X <= self.hi), axis=1)


ActionSpace = Union[DiscreteSpace, ContinuousBox]


@dataclass(frozen=True)
class Observation:
    """One evaluated point: feature vector ``x`` and objective value ``y``."""

    x: np.ndarray
    y: float

    def __post_init__(self):
        if not np.isfinite(self.y):
            raise ValueError("objective value must be finite")


@dataclass(frozen=True)
class LabeledSet:
    """Binary-labeled training data plus the threshold that generated it.

    ``z[i] = 1`` marks a point above the cut threshold (to be removed),
    ``z[i] = 0`` a point at or below it.  ``alpha`` is None when labels
    come from pairwise comparisons rather than a numeric threshold.
    """

    X: np.ndarray
    z: np.ndarray
    alpha: Optional[float] = None

    def __post_init__(self):
        X = np.asarray(self.X, dtype=np.float64)
        z = np.asarray(self.z, dtype=np.int8)
        if X.ndim != 2 or z.ndim != 1 or X.shape[0] != z.shape[0]:
            raise ValueError("X must be (m, d) and z (m,) with matching m")
        if X.shape[0] == 0:
            raise ValueError("labeled set must be nonempty")
        if not np.all((z == 0) | (z == 1)):
            raise ValueError("labels must be 0 or 1")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "z", z)

    def __len__(self) -> int:
        return self.X.shape[0]


@dataclass
class RoundRecord:
    """Everything observed and decided in one round of a run."""

    t: int
    values: np.ndarray
    best_so_far: float
    evals: int  # cumulative objective evaluations through this round
    indices: Optional[np.ndarray] = None  # discrete spaces: point indices
    points: Optional[np.ndarray] = None  # continuous spaces: coordinates
    alpha: Optional[float] = None
    coverage: Optional[float] = None
    ess: Optional[float] = None
    bandwidth: Optional[np.ndarray] = None
    comparisons: int = 0
    warnings: list = field(default_factory=list)
    h_vector: Optional[np.ndarray] = None  # theory log: h over all points
    log_weights: Optional[np.ndarray] = None  # theory log: post-update log p


@dataclass
class RunTrace:
    """Per-round records of a single optimization run."""

    method: str
    rounds: list
    config_snapshot: dict
    seed: dict
    space_info: dict
    final: dict = field(default_factory=dict)
    values_table: Optional[np.ndarray] = None  # theory log: f over all points
    eta: Optional[float] = None

    def num_rounds(self) -> int:
        return len(self.rounds)

    def all_values(self) -> np.ndarray:
        return np.concatenate([r.values for r in self.rounds])


@dataclass(frozen=True)
class SeedPolicy:
    """Deterministic seeding: every stream derives from (base_seed, replicate).

    Extra string labels (e.g. a method name) fork independent substreams
    without breaking reproducibility; the same labels always yield the
    same stream.
    """

    base_seed: int
    replicate_index: int = 0

    def _entropy(self, labels: Sequence[str]) -> list:
        ent = [int(self.base_seed), int(self.replicate_index)]
        ent.extend(zlib.crc32(lab.encode("utf-8")) for lab in labels)
        return ent

    def rng(self, *labels: str) -> np.random.Generator:
        return np.random.default_rng(np.random.SeedSequence(self._entropy(labels)))

    def as_dict(self) -> dict:
        return {
            "base_seed": int(self.base_seed),
            "replicate_index": int(self.replicate_index),
        }


def median_threshold(values) -> float:
    """Lower median: element ``floor((k-1)/2)`` of the sorted values.

    Guarantees at least half the batch satisfies y <= alpha; deterministic
    under permutation.
    """
    vals = np.asarray(values, dtype=np.float64)
    if vals.size == 0:
        raise ValueError("empty batch")
    if not np.all(np.isfinite(vals)):
        raise ValueError("threshold batch contains non-finite values")
    k = vals.size
    return float(np.sort(vals)[(k - 1) // 2])


def relabel_history(history: Sequence[Observation], alpha: float) -> LabeledSet:
    """Label every past observation against the current threshold.

    z = 1 iff y > alpha (strictly); ties stay in the keep class.
    """
    if len(history) == 0:
        raise ValueError("empty history")
    X = np.stack([obs.x for obs in history])
    y = np.array([obs.y for obs in history])
    z = (y > alpha).astype(np.int8)
    return LabeledSet(X=X, z=z, alpha=float(alpha))


def best_so_far(trace: RunTrace) -> list:
    """Running minimum of observed values, one entry per round."""
    if trace.num_rounds() == 0:
        raise ValueError("trace has no rounds")
    out = []
    best = np.inf
    for rec in trace.rounds:
        best = min(best, float(np.min(rec.values)))
        out.append(best)
    return out
