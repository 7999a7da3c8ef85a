"""Proposal distributions: exact multiplicative weights on discrete spaces and
Gaussian-perturbation samplers for continuous boxes.

Weights live in log space throughout: T rounds of downweighting multiply a
point's weight by (1-eta)^T, which underflows quickly in linear space.

The continuous sampler has two strategies.  ``mw`` importance-samples the
multiplicative-weights target exactly (weights W(x)/q(x) against the
box-truncated kernel mixture).  ``survivor`` is the mode-seeking variant used
by the optimizer: it proposes around the points no history classifier has cut,
with per-dimension bandwidth matched to their spread and an extrapolated mean
shift, and keeps only uncut candidates.  Faithful reweighting concentrates no
faster than (1/(1-eta/2))^T, which is far too slow to optimize within ten
rounds; the survivor strategy trades exactness for that speed.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.special import logsumexp, ndtr, ndtri

from .core import ContinuousBox
from .classify import SoftLabeler


@dataclass(frozen=True)
class DiscreteWeights:
    """Unnormalized log-weights over a fixed point ordering."""

    log_w: np.ndarray
    eta: float

    def __post_init__(self):
        if not 0.0 <= self.eta <= 0.5:
            raise ValueError("eta must lie in [0, 1/2]")
        lw = np.asarray(self.log_w, dtype=np.float64)
        object.__setattr__(self, "log_w", lw)
        lw.setflags(write=False)

    @property
    def n(self) -> int:
        return self.log_w.shape[0]

    @classmethod
    def uniform(cls, n: int, eta: float) -> "DiscreteWeights":
        return cls(log_w=np.zeros(n), eta=eta)

    def log_probabilities(self) -> np.ndarray:
        total = logsumexp(self.log_w)
        if not np.isfinite(total):
            raise ValueError("degenerate distribution")
        return self.log_w - total

    def probabilities(self) -> np.ndarray:
        return np.exp(self.log_probabilities())


def mw_update_vector(weights: DiscreteWeights, hvec: np.ndarray) -> DiscreteWeights:
    """Multiply cut points' weights by (1 - eta); keep-points are untouched."""
    hvec = np.asarray(hvec)
    if hvec.shape != weights.log_w.shape:
        raise ValueError("h vector length must match the weight vector")
    step = np.log1p(-weights.eta) if weights.eta > 0 else 0.0
    return DiscreteWeights(log_w=weights.log_w + hvec * step, eta=weights.eta)


def mw_update(
    weights: DiscreteWeights, h: SoftLabeler, points: np.ndarray
) -> DiscreteWeights:
    return mw_update_vector(weights, h.effective_h(points))


def coverage_vector(weights: DiscreteWeights, hvec: np.ndarray) -> float:
    """Exact cut mass of h under the current normalized weights."""
    mass = float(weights.probabilities() @ np.asarray(hvec, dtype=np.float64))
    return min(max(mass, 0.0), 1.0)


def coverage(weights: DiscreteWeights, h: SoftLabeler, points: np.ndarray) -> float:
    return coverage_vector(weights, h.effective_h(points))


def draw_discrete(
    weights: DiscreteWeights, n: int, rng: np.random.Generator
) -> np.ndarray:
    """n i.i.d. index draws via inverse CDF over the fixed point ordering."""
    if n < 1:
        raise ValueError("n must be >= 1")
    p = weights.probabilities()
    cdf = np.cumsum(p)
    cdf[-1] = 1.0
    u = rng.random(n)
    return np.minimum(np.searchsorted(cdf, u, side="right"), weights.n - 1)


# ---------------------------------------------------------------------------
# Continuous proposals
# ---------------------------------------------------------------------------


@dataclass
class ParticleState:
    """Mutable per-run state for the continuous sampler.

    Tracks every proposed batch with observed values, the classifier history
    h_1..h_t, and the kernel bandwidth.  The downweighting function
    W(x) = prod_s (1 - eta * h_s(x)) is evaluable at any point.
    """

    box: ContinuousBox
    eta: float
    bandwidth: np.ndarray  # per-dimension kernel cap
    oversample: int = 10
    mode: str = "survivor"
    spread_factor: float = 1.0  # survivor: bandwidth = factor * elite std
    drift_gain: float = 4.0  # survivor: extrapolation of the elite-mean shift
    classifiers: list = field(default_factory=list)
    batches: list = field(default_factory=list)
    values: list = field(default_factory=list)
    _prev_elite_mean: Optional[np.ndarray] = None

    def __post_init__(self):
        if not 0.0 <= self.eta <= 0.5:
            raise ValueError("eta must lie in [0, 1/2]")
        if self.mode not in ("survivor", "mw"):
            raise ValueError("mode must be 'survivor' or 'mw'")
        self.bandwidth = np.broadcast_to(
            np.asarray(self.bandwidth, dtype=np.float64), (self.box.d,)
        ).copy()
        if np.any(self.bandwidth <= 0):
            raise ValueError("bandwidth must be positive")

    @property
    def last_batch(self) -> Optional[np.ndarray]:
        return self.batches[-1] if self.batches else None

    def append_round(self, batch: np.ndarray, values: np.ndarray):
        batch = np.asarray(batch, dtype=np.float64)
        self.batches.append(batch)
        self.values.append(np.asarray(values, dtype=np.float64))
        if self._prev_elite_mean is None:
            self._prev_elite_mean = batch.mean(axis=0)

    def append_classifier(self, h: SoftLabeler):
        self.classifiers.append(h)

    def shrink_bandwidth_if_covered(self, cov: float, threshold: float = 0.9):
        """Halve the kernel cap once a round cuts nearly all proposal mass."""
        if cov > threshold:
            self.bandwidth = np.maximum(self.bandwidth * 0.5, 1e-8 * self.box.side)

    def cut_counts(self, X: np.ndarray, upto: Optional[int] = None) -> np.ndarray:
        """Number of history classifiers that cut each row of X."""
        X = np.atleast_2d(X)
        hs = self.classifiers if upto is None else self.classifiers[:upto]
        counts = np.zeros(X.shape[0])
        for h in hs:
            counts += h.effective_h(X)
        return counts

    def target_log_weight(self, X: np.ndarray) -> np.ndarray:
        """log W(x) = (cut count) * log(1 - eta)."""
        if self.eta == 0:
            return np.zeros(np.atleast_2d(X).shape[0])
        return self.cut_counts(X) * np.log1p(-self.eta)

    def survivor_pool(self) -> np.ndarray:
        """All observed points that no history classifier cuts; falls back to
        the latest batch when fewer than two survive."""
        pool = np.vstack(self.batches)
        if not self.classifiers:
            return pool
        alive = self.cut_counts(pool) == 0
        if alive.sum() >= 2:
            return pool[alive]
        return self.last_batch


@dataclass
class DrawDiagnostics:
    ess: float
    coverage: Optional[float]
    bandwidth: np.ndarray
    widened: bool = False
    warnings: list = field(default_factory=list)


def _sample_truncated_mixture(
    centers: np.ndarray,
    bandwidth: np.ndarray,
    box: ContinuousBox,
    m: int,
    rng: np.random.Generator,
) -> np.ndarray:
    """Draw m points from the equal-weight box-truncated Gaussian mixture.

    Truncation is exact per dimension (inverse-CDF on the clipped normal CDF
    range), so no rejection loop is needed even in high dimension.
    """
    k = centers.shape[0]
    which = rng.integers(0, k, size=m)
    c = centers[which]
    a = ndtr((box.lo - c) / bandwidth)
    b = ndtr((box.hi - c) / bandwidth)
    u = rng.uniform(a, b)
    x = c + bandwidth * ndtri(u)
    return np.clip(x, box.lo, box.hi)


def _log_mixture_density(
    X: np.ndarray,
    centers: np.ndarray,
    bandwidth: np.ndarray,
    box: ContinuousBox,
) -> np.ndarray:
    """Exact log density of the truncated mixture at each row of X."""
    Xs = X / bandwidth
    Cs = centers / bandwidth
    # pairwise squared Mahalanobis distances in scaled coordinates
    d2 = (
        (Xs**2).sum(axis=1)[:, None]
        + (Cs**2).sum(axis=1)[None, :]
        - 2.0 * Xs @ Cs.T
    )
    log_norm = -0.5 * X.shape[1] * np.log(2 * np.pi) - np.log(bandwidth).sum()
    # per-center box mass from the product of univariate truncation factors
    trunc = ndtr((box.hi - centers) / bandwidth) - ndtr((box.lo - centers) / bandwidth)
    log_z = np.log(np.clip(trunc, 1e-300, None)).sum(axis=1)
    comp = -0.5 * d2 + log_norm - log_z[None, :]
    return logsumexp(comp, axis=1) - np.log(centers.shape[0])


def residual_resample(
    probs: np.ndarray, n: int, rng: np.random.Generator
) -> np.ndarray:
    """Residual resampling: deterministic integer copies plus a multinomial
    top-up from the fractional remainders."""
    probs = np.asarray(probs, dtype=np.float64)
    probs = probs / probs.sum()
    scaled = n * probs
    copies = np.floor(scaled).astype(int)
    idx = np.repeat(np.arange(len(probs)), copies)
    r = n - copies.sum()
    if r > 0:
        resid = scaled - copies
        resid = resid / resid.sum()
        extra = rng.choice(len(probs), size=r, p=resid)
        idx = np.concatenate([idx, extra])
    return idx


def draw_continuous(
    state: ParticleState, n: int, rng: np.random.Generator
) -> tuple:
    """Draw the next batch of n points; returns (points, DrawDiagnostics)."""
    if state.last_batch is None:
        raise ValueError("particle pool is empty; draw round 0 uniformly instead")
    if state.mode == "mw":
        return _draw_mw_is(state, n, rng)
    return _draw_survivor(state, n, rng)


def _draw_mw_is(state: ParticleState, n: int, rng: np.random.Generator) -> tuple:
    """Exact self-normalized importance sampling of the downweighted target.

    Proposal q is the truncated mixture at the latest batch; weights are
    W(x)/q(x); candidates are residual-resampled down to n.
    """
    centers = state.last_batch
    m = state.oversample * n
    bandwidth = state.bandwidth.copy()
    widened = False
    for _ in range(2):
        cands = _sample_truncated_mixture(centers, bandwidth, state.box, m, rng)
        log_q = _log_mixture_density(cands, centers, bandwidth, state.box)
        if state.classifiers:
            pre_counts = state.cut_counts(cands, upto=len(state.classifiers) - 1)
            h_last = np.asarray(
                state.classifiers[-1].effective_h(cands), dtype=np.float64
            )
            step = np.log1p(-state.eta) if state.eta > 0 else 0.0
            log_target = (pre_counts + h_last) * step
            log_pre = pre_counts * step
        else:
            h_last = None
            log_target = np.zeros(m)
            log_pre = np.zeros(m)
        log_w = log_target - log_q
        if np.any(np.isfinite(log_w)):
            break
        bandwidth = bandwidth * 2.0
        widened = True
    else:
        raise ValueError("all importance weights vanished")

    w = np.exp(log_w - log_w.max())
    ess = float(w.sum() ** 2 / (w**2).sum())

    cov = None
    if h_last is not None:
        # self-normalized cut-mass estimate of the newest classifier under the
        # previous round's target
        lp = log_pre - log_q
        w_pre = np.exp(lp - lp.max())
        cov = float((w_pre @ h_last) / w_pre.sum())

    diag = DrawDiagnostics(ess=ess, coverage=cov, bandwidth=bandwidth, widened=widened)
    if ess < 0.01 * m:
        diag.warnings.append(f"low effective sample size: {ess:.1f} of {m}")
    idx = residual_resample(w, n, rng)
    return cands[idx], diag


def _draw_survivor(state: ParticleState, n: int, rng: np.random.Generator) -> tuple:
    """Mode-seeking draw: perturb the uncut pool and keep uncut candidates.

    The kernel is centered on the surviving pool shifted by an extrapolation
    of the elite-mean displacement (drift_gain), with per-dimension bandwidth
    proportional to the survivors' spread.  Candidates any classifier cuts
    are dropped; if none survive, soft (1-eta)^M weights take over.
    """
    elites = state.survivor_pool()
    mu = elites.mean(axis=0)
    prev = state._prev_elite_mean if state._prev_elite_mean is not None else mu
    drift = state.drift_gain * (mu - prev)
    state._prev_elite_mean = mu

    side = state.box.side
    bandwidth = np.clip(
        state.spread_factor * elites.std(axis=0), 1e-4 * side, state.bandwidth
    )
    m = state.oversample * n
    centers = np.clip(
        elites[rng.integers(0, len(elites), size=m)] + drift,
        state.box.lo,
        state.box.hi,
    )
    a = ndtr((state.box.lo - centers) / bandwidth)
    b = ndtr((state.box.hi - centers) / bandwidth)
    cands = np.clip(
        centers + bandwidth * ndtri(rng.uniform(a, b)), state.box.lo, state.box.hi
    )

    counts = state.cut_counts(cands)
    alive = counts == 0
    warnings = []
    if alive.any():
        probs = alive / alive.sum()
        ess = float(alive.sum())
    else:
        warnings.append("no candidate survived every classifier; soft reweighting")
        step = np.log1p(-state.eta) if state.eta > 0 else 0.0
        w = np.exp(counts * step - (counts * step).max())
        probs = w / w.sum()
        ess = float(w.sum() ** 2 / (w**2).sum())

    cov = None
    if state.classifiers:
        cov = float(
            np.mean(np.asarray(state.classifiers[-1].effective_h(cands), dtype=float))
        )
    diag = DrawDiagnostics(ess=ess, coverage=cov, bandwidth=bandwidth, warnings=warnings)
    if ess < 0.01 * m:
        diag.warnings.append(f"low effective sample size: {ess:.1f} of {m}")
    idx = residual_resample(probs, n, rng)
    return cands[idx], diag
