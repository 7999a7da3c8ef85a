"""Benchmark objectives: synthetic generators, DNA 8-mer tables, subprocess adapter."""

from __future__ import annotations

import itertools
import logging
import subprocess
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .core import ContinuousBox, DiscreteSpace

logger = logging.getLogger(__name__)

BASES = "ACGT"
SEQ_LEN = 8
PBM_DIM = SEQ_LEN * len(BASES)  # 32 binary features, one-hot base per position


@dataclass(frozen=True)
class RandomLinear:
    """f(x) = w.x on [-1,1]^d with unit-norm w; minimum is -||w||_1."""

    w: np.ndarray

    @property
    def d(self) -> int:
        return self.w.shape[0]

    @property
    def domain(self) -> ContinuousBox:
        return ContinuousBox(-np.ones(self.d), np.ones(self.d))

    def evaluate(self, X: np.ndarray) -> np.ndarray:
        return np.atleast_2d(X) @ self.w

    @property
    def min_value(self) -> float:
        return -float(np.abs(self.w).sum())

    @property
    def argmin(self) -> np.ndarray:
        return -np.sign(self.w)


@dataclass(frozen=True)
class LinearQuadratic:
    """f(x) = w.x + mix * (x-x0).A(x-x0) with A = G'G/d (PSD)."""

    w: np.ndarray
    A: np.ndarray
    x0: np.ndarray
    mix: float

    @property
    def d(self) -> int:
        return self.w.shape[0]

    @property
    def domain(self) -> ContinuousBox:
        return ContinuousBox(-np.ones(self.d), np.ones(self.d))

    def evaluate(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(X)
        diff = X - self.x0
        quad = np.einsum("ij,jk,ik->i", diff, self.A, diff)
        return X @ self.w + self.mix * quad

    def quadratic_part(self, X: np.ndarray) -> np.ndarray:
        diff = np.atleast_2d(X) - self.x0
        return self.mix * np.einsum("ij,jk,ik->i", diff, self.A, diff)


def gen_random_linear(d: int, rng: np.random.Generator) -> RandomLinear:
    """Random direction on the unit sphere."""
    if d < 1:
        raise ValueError("dimension must be >= 1")
    w = rng.standard_normal(d)
    w = w / np.linalg.norm(w)
    return RandomLinear(w=w)


def gen_linear_quadratic(
    d: int, mix: float, rng: np.random.Generator
) -> LinearQuadratic:
    """Random linear part plus a random PSD quadratic centered inside the box.

    The 1/d scaling keeps the quadratic term O(1) on the unit box for any d.
    """
    if d < 1:
        raise ValueError("dimension must be >= 1")
    if mix < 0:
        raise ValueError("mix must be >= 0")
    w = rng.standard_normal(d)
    w = w / np.linalg.norm(w)
    G = rng.standard_normal((d, d))
    A = G.T @ G / d
    x0 = rng.uniform(-1.0, 1.0, size=d)
    return LinearQuadratic(w=w, A=A, x0=x0, mix=float(mix))


# Dixon-Szego parameter tables for the two classic low-dimensional benchmarks.
_SHEKEL_A = np.array(
    [
        [4.0, 4.0, 4.0, 4.0],
        [1.0, 1.0, 1.0, 1.0],
        [8.0, 8.0, 8.0, 8.0],
        [6.0, 6.0, 6.0, 6.0],
        [3.0, 7.0, 3.0, 7.0],
        [2.0, 9.0, 2.0, 9.0],
        [5.0, 5.0, 3.0, 3.0],
        [8.0, 1.0, 8.0, 1.0],
        [6.0, 2.0, 6.0, 2.0],
        [7.0, 3.6, 7.0, 3.6],
    ]
)
_SHEKEL_C = np.array([1, 2, 2, 4, 4, 6, 3, 7, 5, 5]) / 10.0

_HARTMANN6_ALPHA = np.array([1.0, 1.2, 3.0, 3.2])
_HARTMANN6_A = np.array(
    [
        [10.0, 3.0, 17.0, 3.5, 1.7, 8.0],
        [0.05, 10.0, 17.0, 0.1, 8.0, 14.0],
        [3.0, 3.5, 1.7, 10.0, 17.0, 8.0],
        [17.0, 8.0, 0.05, 10.0, 0.1, 14.0],
    ]
)
_HARTMANN6_P = 1e-4 * np.array(
    [
        [1312, 1696, 5569, 124, 8283, 5886],
        [2329, 4135, 8307, 3736, 1004, 9991],
        [2348, 1451, 3522, 2883, 3047, 6650],
        [4047, 8828, 8732, 5743, 1091, 381],
    ]
)


@dataclass(frozen=True)
class Shekel4:
    """Shekel function, m foci, on [0,10]^4."""

    m: int = 10

    def __post_init__(self):
        if not 1 <= self.m <= _SHEKEL_A.shape[0]:
            raise ValueError("m must be in 1..10")

    @property
    def d(self) -> int:
        return 4

    @property
    def domain(self) -> ContinuousBox:
        return ContinuousBox(np.zeros(4), 10.0 * np.ones(4))

    def evaluate(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(X)
        _check_domain(self.domain, X)
        a = _SHEKEL_A[: self.m]
        c = _SHEKEL_C[: self.m]
        sq = ((X[:, None, :] - a[None, :, :]) ** 2).sum(axis=2)
        return -(1.0 / (sq + c)).sum(axis=1)


@dataclass(frozen=True)
class Hartmann6:
    """Hartmann function on [0,1]^6; global minimum about -3.32237."""

    @property
    def d(self) -> int:
        return 6

    @property
    def domain(self) -> ContinuousBox:
        return ContinuousBox(np.zeros(6), np.ones(6))

    def evaluate(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(X)
        _check_domain(self.domain, X)
        expo = (_HARTMANN6_A[None, :, :] * (X[:, None, :] - _HARTMANN6_P[None, :, :]) ** 2).sum(
            axis=2
        )
        return -(_HARTMANN6_ALPHA * np.exp(-expo)).sum(axis=1)


def shekel4(x, m: int = 10) -> float:
    return float(Shekel4(m=m).evaluate(np.asarray(x, dtype=float))[0])


def hartmann6(x) -> float:
    return float(Hartmann6().evaluate(np.asarray(x, dtype=float))[0])


def _check_domain(box: ContinuousBox, X: np.ndarray):
    if not bool(np.all(box.contains(X))):
        raise ValueError("point outside the objective's domain")


def encode_sequences(sequences: Sequence[str]) -> np.ndarray:
    """One-hot encode 8-mers: feature pos*4 + base is 1 iff that base sits there."""
    feats = np.zeros((len(sequences), PBM_DIM), dtype=np.float64)
    for i, seq in enumerate(sequences):
        if len(seq) != SEQ_LEN:
            raise ValueError(f"sequence {seq!r} is not length {SEQ_LEN}")
        for pos, ch in enumerate(seq):
            b = BASES.find(ch)
            if b < 0:
                raise ValueError(f"sequence {seq!r} has invalid base {ch!r}")
            feats[i, pos * 4 + b] = 1.0
    return feats


def decode_features(X: np.ndarray) -> list:
    """Inverse of encode_sequences; rejects rows that are not valid one-hots."""
    X = np.atleast_2d(X)
    if X.shape[1] != PBM_DIM:
        raise ValueError("feature rows must have 32 entries")
    block = X.reshape(len(X), SEQ_LEN, 4)
    if not np.all((block == 0) | (block == 1)) or not np.all(block.sum(axis=2) == 1):
        raise ValueError("feature row is not a valid one-hot 8-mer encoding")
    idx = block.argmax(axis=2)
    return ["".join(BASES[b] for b in row) for row in idx]


@dataclass(frozen=True)
class PbmProblem:
    """A complete 8-mer binding table; the objective is negative affinity."""

    sequences: tuple
    affinities: np.ndarray
    features: np.ndarray

    def __post_init__(self):
        if len(self.sequences) != len(self.affinities):
            raise ValueError("sequences and affinities length mismatch")
        if self.features.shape != (len(self.sequences), PBM_DIM):
            raise ValueError("features shape mismatch")

    @property
    def n(self) -> int:
        return len(self.sequences)

    def space(self) -> DiscreteSpace:
        return DiscreteSpace(ids=self.sequences, features=self.features)

    def objective(self) -> "PbmLookup":
        return PbmLookup(problem=self)

    def objective_values(self) -> np.ndarray:
        """Negative affinity for every sequence, in space order."""
        return -self.affinities


@dataclass(frozen=True)
class PbmLookup:
    """Table-lookup objective over a PbmProblem's sequences."""

    problem: PbmProblem
    _table: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        table = {
            seq: -float(a)
            for seq, a in zip(self.problem.sequences, self.problem.affinities)
        }
        object.__setattr__(self, "_table", table)

    @property
    def d(self) -> int:
        return PBM_DIM

    @property
    def domain(self):
        return None  # membership enforced by the lookup itself

    def evaluate(self, X: np.ndarray) -> np.ndarray:
        seqs = decode_features(X)
        try:
            return np.array([self._table[s] for s in seqs])
        except KeyError as exc:
            raise ValueError(f"sequence {exc.args[0]!r} is not a listed action") from exc


def load_pbm(path) -> PbmProblem:
    """Read a two-column TSV of (8-mer sequence, affinity).

    A single header line is tolerated when its second field is not numeric.
    Malformed rows raise with their line number; duplicate sequences are an
    error.
    """
    sequences = []
    affinities = []
    seen = set()
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) != 2:
                raise ValueError(f"line {lineno}: expected 2 columns, got {len(parts)}")
            seq, val = parts
            try:
                affinity = float(val)
            except ValueError:
                if lineno == 1:
                    continue  # header
                raise ValueError(f"line {lineno}: affinity {val!r} is not a number")
            if len(seq) != SEQ_LEN or any(ch not in BASES for ch in seq):
                raise ValueError(f"line {lineno}: invalid sequence {seq!r}")
            if seq in seen:
                raise ValueError(f"line {lineno}: duplicate action {seq!r}")
            seen.add(seq)
            sequences.append(seq)
            affinities.append(affinity)
    if not sequences:
        raise ValueError("no data rows in PBM file")
    return PbmProblem(
        sequences=tuple(sequences),
        affinities=np.asarray(affinities, dtype=np.float64),
        features=encode_sequences(sequences),
    )


def all_8mers() -> tuple:
    return tuple("".join(p) for p in itertools.product(BASES, repeat=SEQ_LEN))


def gen_synthetic_pbm(
    rng: np.random.Generator,
    noise_scale: float = 0.01,
    position_decay: float = 0.6,
) -> PbmProblem:
    """Full 65536-row landscape: per-position additive weights plus small noise.

    affinity(seq) = sum_pos W[pos, base(seq, pos)] + eps,
    eps ~ N(0, (noise_scale * range(W))^2).  Position p's weights are scaled
    by position_decay**p, mimicking the strong core-motif positions of real
    binding data; decay 1 gives equally informative positions.  With zero
    noise the argmax is the per-position argmax of W.
    """
    W = rng.standard_normal((SEQ_LEN, len(BASES)))
    W *= (position_decay ** np.arange(SEQ_LEN))[:, None]
    n = len(BASES) ** SEQ_LEN
    idx = np.arange(n)
    # base index at each position, most-significant position first
    digits = np.stack(
        [(idx // len(BASES) ** (SEQ_LEN - 1 - p)) % len(BASES) for p in range(SEQ_LEN)],
        axis=1,
    )
    clean = W[np.arange(SEQ_LEN)[None, :], digits].sum(axis=1)
    noise_sd = noise_scale * float(W.max() - W.min())
    affinities = clean + rng.normal(0.0, noise_sd, size=n) if noise_sd > 0 else clean

    sequences = all_8mers()
    feats = np.zeros((n, PBM_DIM), dtype=np.float64)
    feats[np.arange(n)[:, None], np.arange(SEQ_LEN)[None, :] * 4 + digits] = 1.0
    return PbmProblem(sequences=sequences, affinities=affinities, features=feats)


@dataclass(frozen=True)
class SubprocessObjective:
    """Line-oriented external evaluator.

    Points go to stdin, one per line with space-separated features; the
    child prints one value per line.  Nonzero exit, timeout, or output that
    cannot be aligned with the input substitutes ``error_value``.
    """

    argv: tuple
    d: int
    error_value: float = 0.0
    timeout: Optional[float] = None
    domain: Optional[ContinuousBox] = None

    def evaluate(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(X)
        payload = (
            "\n".join(" ".join(format(float(v), ".17g") for v in row) for row in X)
            + "\n"
        )
        try:
            proc = subprocess.run(
                list(self.argv),
                input=payload,
                capture_output=True,
                text=True,
                timeout=self.timeout,
            )
        except subprocess.TimeoutExpired:
            logger.warning("subprocess objective timed out; substituting error_value")
            return np.full(len(X), self.error_value)
        if proc.returncode != 0:
            logger.warning(
                "subprocess objective exited with %d; substituting error_value",
                proc.returncode,
            )
            return np.full(len(X), self.error_value)
        lines = proc.stdout.splitlines()
        if len(lines) != len(X):
            logger.warning(
                "subprocess objective returned %d lines for %d points; "
                "substituting error_value",
                len(lines),
                len(X),
            )
            return np.full(len(X), self.error_value)
        out = np.empty(len(X))
        for i, line in enumerate(lines):
            try:
                v = float(line.strip())
            except ValueError:
                v = self.error_value
            out[i] = v if np.isfinite(v) else self.error_value
        return out


def eval_batch(objective, points: np.ndarray) -> np.ndarray:
    """Evaluate a batch, enforcing domain membership and finite outputs."""
    X = np.atleast_2d(np.asarray(points, dtype=np.float64))
    domain = getattr(objective, "domain", None)
    if domain is not None:
        _check_domain(domain, X)
    values = np.asarray(objective.evaluate(X), dtype=np.float64)
    if values.shape != (X.shape[0],):
        raise ValueError("objective returned wrong number of values")
    if not np.all(np.isfinite(values)):
        raise ValueError("objective returned non-finite values")
    return values
