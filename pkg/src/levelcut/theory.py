"""Numerical validators for the convergence and selective-classification
bounds: the multiplicative-weights lower bound, its tuned-step-size form,
abstention-rate estimation, and Monte-Carlo checks of the Gaussian sampling
inequalities behind the bootstrap ensemble.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.special import logsumexp, ndtr

from .classify import ABSTAIN, SoftLabeler
from .core import RunTrace

SLACK_TOL = 1e-9


def mw_lower_bound(gamma: float, eta: float, T: int, M: float, card_x: int) -> float:
    """Lower bound on log p^(T)(x): (gamma*eta/(eta+2))*T - eta*(eta+1)*M - log(2|X|)."""
    if not 0.0 <= eta <= 0.5:
        raise ValueError("eta must lie in [0, 1/2]")
    if not 0.0 < gamma <= 1.0:
        raise ValueError("gamma must lie in (0, 1]")
    if M > T:
        raise ValueError("M cannot exceed T")
    if card_x < 1:
        raise ValueError("card_x must be >= 1")
    return _bound_formula(gamma, eta, T, M, card_x)


def _bound_formula(gamma, eta, T, M, card_x) -> float:
    return (gamma * eta / (eta + 2.0)) * T - eta * (eta + 1.0) * M - math.log(2.0 * card_x)


def exact_classifier_log_floor(eta: float, T: int, card_x: int) -> float:
    """Probability floor at the optimum when every round cuts at least half
    the current mass with a perfect sublevel classifier:
    min(T*log(2/(2-eta)) - log|X|, 0)."""
    if not 0.0 <= eta <= 0.5:
        raise ValueError("eta must lie in [0, 1/2]")
    return min(T * math.log(2.0 / (2.0 - eta)) - math.log(card_x), 0.0)


@dataclass
class BoundReport:
    """Per-round comparison of the exact log-probability at a target point
    against the multiplicative-weights lower bound."""

    x_star_index: int
    eta: float
    card_x: int
    rows: list = field(default_factory=list)
    notes: list = field(default_factory=list)

    @property
    def verdict(self) -> bool:
        return all(row["slack"] >= -SLACK_TOL for row in self.rows)

    def to_dict(self) -> dict:
        return {
            "x_star_index": self.x_star_index,
            "eta": self.eta,
            "card_x": self.card_x,
            "verdict": self.verdict,
            "notes": list(self.notes),
            "rows": [dict(r) for r in self.rows],
        }


def verify_weight_bound(trace: RunTrace, x_star_index: int) -> BoundReport:
    """Check the lower bound round by round on a fully logged discrete run.

    The exact log p^(t)(x*) comes from the closed-form weights
    p0 * (1-eta)^{M_t(x)}; gamma for round t is the minimum logged coverage
    over rounds 1..t.  Rounds with zero coverage are flagged (the bound is
    then vacuous, never violated).
    """
    if trace.eta is None:
        raise ValueError("trace does not record eta")
    eta = float(trace.eta)
    card_x = int(trace.space_info["size"])
    rounds = [r for r in trace.rounds if r.t >= 1]
    if not rounds:
        raise ValueError("trace has no classifier rounds")
    if any(r.h_vector is None or r.coverage is None for r in rounds):
        raise ValueError("trace was not run with theory logging enabled")
    if not 0 <= x_star_index < card_x:
        raise ValueError("x_star_index out of range")

    report = BoundReport(x_star_index=x_star_index, eta=eta, card_x=card_x)
    step = math.log1p(-eta) if eta > 0 else 0.0
    counts = np.zeros(card_x)
    gamma_running = np.inf
    for t_idx, rec in enumerate(rounds, start=1):
        counts += rec.h_vector
        gamma_running = min(gamma_running, float(rec.coverage))
        log_w = counts * step
        lhs = float(log_w[x_star_index] - logsumexp(log_w))
        if rec.log_weights is not None:
            logged = rec.log_weights - logsumexp(rec.log_weights)
            if not np.allclose(logged[x_star_index] - (log_w[x_star_index] - logsumexp(log_w)), 0.0, atol=1e-9):
                report.notes.append(f"round {rec.t}: logged weights disagree with h history")
        m_star = float(counts[x_star_index])
        if gamma_running <= 0.0:
            report.notes.append(f"round {rec.t}: coverage 0, bound vacuous")
            rhs = _bound_formula(0.0, eta, t_idx, m_star, card_x)
        else:
            rhs = _bound_formula(gamma_running, eta, t_idx, m_star, card_x)
        report.rows.append(
            {
                "t": int(rec.t),
                "lhs": lhs,
                "rhs": rhs,
                "slack": lhs - rhs,
                "gamma": float(gamma_running),
                "m_star": m_star,
                "coverage": float(rec.coverage),
            }
        )
    return report


def exact_log_prob(trace: RunTrace, index: int, upto: Optional[int] = None) -> float:
    """Exact log p^(t)(index) reconstructed from a theory-logged trace."""
    if trace.eta is None:
        raise ValueError("trace does not record eta")
    card_x = int(trace.space_info["size"])
    step = math.log1p(-trace.eta) if trace.eta > 0 else 0.0
    counts = np.zeros(card_x)
    for rec in trace.rounds:
        if rec.t < 1:
            continue
        if upto is not None and rec.t > upto:
            break
        if rec.h_vector is None:
            raise ValueError("trace was not run with theory logging enabled")
        counts += rec.h_vector
    log_w = counts * step
    return float(log_w[index] - logsumexp(log_w))


def tuned_eta_and_bound(q: float, gamma: float, T: int, card_x: int) -> tuple:
    """Tuned step size and the resulting fixed-eta convergence floor.

    eta = min(1/2, sqrt(1/4 + 1/(2q)) - 3/2), capped at 1/2 as q -> 0, and
    bound = min(1/5, 1/3 - 4q/3) * gamma*T/2 - log(2|X|); valid for
    q = M_T(x)/(gamma*T) <= 1/4.
    """
    if q < 0 or q > 0.25:
        raise ValueError("q must lie in [0, 1/4]")
    if not 0.0 < gamma <= 1.0:
        raise ValueError("gamma must lie in (0, 1]")
    if q == 0:
        eta = 0.5
    else:
        eta = min(0.5, math.sqrt(0.25 + 1.0 / (2.0 * q)) - 1.5)
    bound = min(0.2, 1.0 / 3.0 - 4.0 * q / 3.0) * gamma * T / 2.0 - math.log(
        2.0 * card_x
    )
    return eta, bound


def abstention_rate(classifier: SoftLabeler, probes: np.ndarray) -> float:
    """Monte-Carlo abstention mass of a classifier under a probe sample."""
    probes = np.atleast_2d(probes)
    if probes.shape[0] < 1:
        raise ValueError("need at least one probe point")
    dec = np.asarray(classifier.decide(probes))
    return float(np.mean(dec == ABSTAIN))


@dataclass
class McReport:
    """A Monte-Carlo frequency against its analytic ceiling."""

    estimate: float
    bound: float
    trials: int
    stderr: float

    @property
    def passed(self) -> bool:
        return self.estimate <= self.bound + 3.0 * self.stderr

    def to_dict(self) -> dict:
        return {
            "estimate": self.estimate,
            "bound": self.bound,
            "trials": self.trials,
            "stderr": self.stderr,
            "passed": self.passed,
        }


def _binomial_se(p_hat: float, trials: int) -> float:
    return math.sqrt(max(p_hat * (1.0 - p_hat), 1e-12) / trials)


def mc_gaussian_min(
    d: int,
    sigma_mat: np.ndarray,
    tau: float,
    epsilon: float,
    B: int,
    trials: int,
    rng: np.random.Generator,
    probe: Optional[np.ndarray] = None,
) -> McReport:
    """Frequency that the best of B Gaussian draws stays eps above the
    ellipsoid infimum in a fixed direction, versus (1 - Phi(eps - sqrt(2 tau)))^B.

    The infimum of x.theta over the tau-ellipsoid around the center is the
    closed form x.center - sqrt(2 tau) * sqrt(x.Sigma.x).
    """
    if trials < 1000:
        raise ValueError("trials must be >= 1000")
    if tau < 0:
        raise ValueError("tau must be >= 0")
    sigma_mat = np.asarray(sigma_mat, dtype=np.float64)
    if sigma_mat.shape != (d, d):
        raise ValueError("Sigma must be d x d")
    chol = np.linalg.cholesky(sigma_mat)  # raises unless positive definite
    x = np.ones(d) / math.sqrt(d) if probe is None else np.asarray(probe, float)
    s = math.sqrt(float(x @ sigma_mat @ x))
    threshold = s * (epsilon - math.sqrt(2.0 * tau))
    v = chol.T @ x  # x.theta ~ N(0, |v|^2) for theta = chol @ xi

    hits = 0
    chunk = max(1, min(trials, 20_000))
    done = 0
    while done < trials:
        take = min(chunk, trials - done)
        proj = rng.standard_normal((take, B, d)) @ v
        hits += int(np.count_nonzero(proj.min(axis=1) > threshold))
        done += take
    estimate = hits / trials
    bound = float(ndtr(-(epsilon - math.sqrt(2.0 * tau)))) ** B
    return McReport(
        estimate=estimate,
        bound=bound,
        trials=trials,
        stderr=_binomial_se(estimate, trials),
    )


def mc_chisq_ball(
    d: int, B: int, c: float, trials: int, rng: np.random.Generator
) -> McReport:
    """Frequency that the largest of B chi-square(d) draws reaches c*d,
    versus the union ceiling B * (c * exp(1 - c))^(d/2)."""
    if c <= 1:
        raise ValueError("c must be > 1")
    if trials < 1:
        raise ValueError("trials must be >= 1")
    hits = 0
    chunk = max(1, min(trials, 50_000))
    done = 0
    while done < trials:
        take = min(chunk, trials - done)
        draws = rng.chisquare(d, size=(take, B))
        hits += int(np.count_nonzero(draws.max(axis=1) >= c * d))
        done += take
    estimate = hits / trials
    bound = B * (c * math.exp(1.0 - c)) ** (d / 2.0)
    return McReport(
        estimate=estimate,
        bound=bound,
        trials=trials,
        stderr=_binomial_se(estimate, trials),
    )
