"""Log partial likelihood, score, Hessian, and curvature-sandwich diagnostics.

Counting-process integrals are finite sums over observed event times using the
canonical event order.  Risk-set exponentials share one log-sum-exp shift
(the global maximum of the linear predictor), so ratios S1/S0 and S2/S0 stay
finite for large ``||beta||``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .survival_sim import SurvivalDataset, event_order


class EmptyRiskSetError(RuntimeError):
    """No subject at risk at the requested time."""


@dataclass(frozen=True)
class LikelihoodSnapshot:
    """Risk-set moments at one time: S0 scalar, S1 vector, S2 matrix."""

    s0: float
    s1: np.ndarray
    s2: np.ndarray
    at_time: float


@dataclass(frozen=True)
class ScoreHessian:
    """Score U_n(beta), Hessian J_n(beta) (negative second derivative), and l_n(beta)."""

    score: np.ndarray
    hessian: np.ndarray
    loglik: float

    def to_json(self):
        return {
            "score": self.score.tolist(),
            "hessian": self.hessian.tolist(),
            "loglik": self.loglik,
        }


def snapshot(dataset: SurvivalDataset, beta, t: float) -> LikelihoodSnapshot:
    """Exact exponential-weighted covariate moments over the risk set {i : X_i >= t}."""

    beta = np.asarray(beta, dtype=float)
    mask = dataset.times >= t
    if not np.any(mask):
        raise EmptyRiskSetError(f"empty risk set at t={t!r}")
    z = dataset.covariates[mask]
    w = np.exp(z @ beta)
    s0 = float(w.sum())
    s1 = w @ z
    s2 = (z * w[:, None]).T @ z
    return LikelihoodSnapshot(s0=s0, s1=s1, s2=s2, at_time=float(t))


def _sweep(dataset: SurvivalDataset, beta, want_hessian: bool):
    """One pass over event times, risk sets accumulated in decreasing time."""

    beta = np.asarray(beta, dtype=float)
    n, p = dataset.n, dataset.p
    z = dataset.covariates
    eta = z @ beta
    shift = float(eta.max())
    w = np.exp(eta - shift)

    ev = event_order(dataset)
    # subjects sorted by decreasing follow-up time; risk set at t is a prefix
    desc = np.argsort(-dataset.times, kind="stable")
    times_desc = dataset.times[desc]

    s0 = 0.0
    s1 = np.zeros(p)
    s2 = np.zeros((p, p)) if want_hessian else None
    loglik = 0.0
    u = np.zeros(p)
    jmat = np.zeros((p, p)) if want_hessian else None

    unique_times = np.unique(ev.times)[::-1]
    ptr = 0
    for t in unique_times:
        # admit everyone with X >= t to the risk set
        stop = np.searchsorted(-times_desc, -t, side="right")
        if stop > ptr:
            blk = desc[ptr:stop]
            wb = w[blk]
            zb = z[blk]
            s0 += float(wb.sum())
            s1 += wb @ zb
            if want_hessian:
                s2 += (zb * wb[:, None]).T @ zb
            ptr = stop
        ratio1 = s1 / s0
        if want_hessian:
            contrib = s2 / s0 - np.outer(ratio1, ratio1)
        lo = np.searchsorted(ev.times, t, side="left")
        hi = np.searchsorted(ev.times, t, side="right")
        log_s0 = shift + np.log(s0)
        for i in ev.subjects[lo:hi]:
            loglik += eta[i] - log_s0
            u += z[i] - ratio1
            if want_hessian:
                jmat += contrib

    loglik /= n
    u /= n
    if want_hessian:
        jmat /= n
        jmat = 0.5 * (jmat + jmat.T)
    return loglik, u, jmat


def evaluate(dataset: SurvivalDataset, beta) -> ScoreHessian:
    """l_n, U_n and J_n at ``beta`` in a single pass over the event order."""

    loglik, u, jmat = _sweep(dataset, beta, want_hessian=True)
    return ScoreHessian(score=u, hessian=jmat, loglik=loglik)


def score(dataset: SurvivalDataset, beta) -> np.ndarray:
    """U_n(beta) without the O(p^2) Hessian accumulation."""

    return _sweep(dataset, beta, want_hessian=False)[1]


def log_likelihood(dataset: SurvivalDataset, beta) -> float:
    """l_n(beta) = C_n(beta) / n."""

    return _sweep(dataset, beta, want_hessian=False)[0]


def sandwich_check(dataset: SurvivalDataset, beta, h):
    """Curvature sandwich for the score increment along ``h``.

    Returns ``(lower, middle, upper, eta)`` with
    eta = max_{i,j} |h'Z_i - h'Z_j|, lower/upper = exp(-/+eta) * h'J_n(beta)h,
    and middle = |h'[U_n(beta+h) - U_n(beta)]| (absolute value: with U_n the
    gradient of the concave l_n the raw increment is nonpositive while the
    flanks are nonnegative, so the magnitude is the comparable quantity).
    """

    beta = np.asarray(beta, dtype=float)
    h = np.asarray(h, dtype=float)
    hz = dataset.covariates @ h
    eta = float(hz.max() - hz.min())
    at_beta = evaluate(dataset, beta)
    quad = float(h @ at_beta.hessian @ h)
    middle = abs(float(h @ (score(dataset, beta + h) - at_beta.score)))
    return (np.exp(-eta) * quad, middle, np.exp(eta) * quad, eta)
