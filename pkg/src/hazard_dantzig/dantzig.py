"""l1-minimization under a sup-norm score constraint, by sequential linearization.

The estimator is argmin ||beta||_1 over {beta : ||U_n(beta)||_inf <= gamma}.
Each outer step linearizes the score at the current iterate (the score's
Jacobian is -J_n), yielding a linear Dantzig-selector LP; the returned point
is certified against the true nonlinear constraint, and the smallest-l1 truly
feasible iterate seen wins.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .lp import LPError, LPInfeasibleError, solve_lp
from .partial_likelihood import evaluate, score
from .survival_sim import SurvivalDataset

logger = logging.getLogger(__name__)


class InfeasibleGammaError(RuntimeError):
    """The linearized Dantzig LP has no feasible point at this gamma."""


def gamma_schedule(n: int, p: int, k2: float, alpha: float) -> float:
    """Constraint level K2 * log(1+p) / n**alpha with 0 < alpha <= 1/2."""

    if n < 1 or p < 1:
        raise ValueError("n and p must be positive integers")
    if k2 <= 0:
        raise ValueError("K2 must be positive")
    if not 0.0 < alpha <= 0.5:
        raise ValueError("schedule exponent alpha must lie in (0, 1/2]")
    return k2 * np.log1p(p) / n**alpha


def l1_min_under_linf(g, r, gamma: float, lp_tol: float = 1e-8) -> np.ndarray:
    """Solve min ||beta||_1 s.t. ||r - G beta||_inf <= gamma.

    LP reformulation over beta = u - v with u, v >= 0; optimality certified by
    the reported duality gap (<= lp_tol required).
    """

    g = np.asarray(g, dtype=float)
    r = np.asarray(r, dtype=float)
    if g.ndim != 2 or g.shape[0] != g.shape[1]:
        raise ValueError("G must be a square matrix")
    p = g.shape[0]
    if r.shape != (p,):
        raise ValueError("r must have length p")
    if gamma < 0:
        raise ValueError("gamma must be nonnegative")

    a_ub = np.block([[g, -g], [-g, g]])
    b_ub = np.concatenate([gamma + r, gamma - r])
    c = np.ones(2 * p)
    try:
        res = solve_lp(c, a_ub, b_ub)
    except LPInfeasibleError as exc:
        raise InfeasibleGammaError(f"infeasible at gamma={gamma}") from exc
    if res.duality_gap > lp_tol:
        raise LPError(f"duality gap {res.duality_gap:.3e} exceeds lp_tol={lp_tol:.3e}")
    return res.x[:p] - res.x[p:]


@dataclass(frozen=True)
class SolverConfig:
    gamma: float
    max_outer: int = 50
    outer_tol: float = 1e-6
    lp_tol: float = 1e-8
    feasibility_slack: float = 1e-6
    init: np.ndarray | None = None

    def __post_init__(self):
        if self.gamma < 0:
            raise ValueError("gamma must be nonnegative")
        if self.max_outer < 1:
            raise ValueError("max_outer must be at least 1")
        if min(self.outer_tol, self.lp_tol, self.feasibility_slack) <= 0:
            raise ValueError("tolerances must be positive")


@dataclass
class EstimateResult:
    beta_hat: np.ndarray
    gamma: float
    outer_iters: int
    objective: float
    constraint_value: float
    trace: list = field(default_factory=list)
    status: str = "converged"
    message: str = ""

    def to_json(self):
        return {
            "beta_hat": self.beta_hat.tolist(),
            "gamma": self.gamma,
            "outer_iters": self.outer_iters,
            "objective": self.objective,
            "constraint_value": self.constraint_value,
            "trace": [[float(a), float(b)] for a, b in self.trace],
            "status": self.status,
            "message": self.message,
        }


def _linf(v) -> float:
    return float(np.max(np.abs(v))) if np.size(v) else 0.0


def _l1(v) -> float:
    return float(np.sum(np.abs(v)))


def _scaling_polish(dataset, beta, threshold):
    """Shrink a feasible point along the ray to the origin while staying feasible.

    Pure l1 improvement toward the argmin; returns the scaled point (possibly
    unchanged).  Deterministic: coarse ascending scan then bisection.
    """

    if not np.any(beta):
        return beta
    if _linf(score(dataset, 0.0 * beta)) <= threshold:
        return np.zeros_like(beta)
    grid = np.linspace(0.0, 1.0, 41)
    feasible_t = 1.0
    lo = 0.0
    for t in grid[1:]:
        if _linf(score(dataset, t * beta)) <= threshold:
            feasible_t = float(t)
            break
        lo = float(t)
    else:
        return beta
    hi = feasible_t
    for _ in range(40):
        mid = 0.5 * (lo + hi)
        if _linf(score(dataset, mid * beta)) <= threshold:
            hi = mid
        else:
            lo = mid
    return hi * beta


def solve_dsfph(dataset: SurvivalDataset, config: SolverConfig) -> EstimateResult:
    """Outer linearization loop with an inner linear Dantzig LP per iterate."""

    p = dataset.p
    beta = (
        np.zeros(p)
        if config.init is None
        else np.array(config.init, dtype=float, copy=True)
    )
    if beta.shape != (p,):
        raise ValueError("init must have length p")

    slack = config.feasibility_slack
    trace = []
    best_beta = None
    best_l1 = np.inf
    converged = False
    retried = False
    message = ""
    k = 0

    def consider(b, cons):
        nonlocal best_beta, best_l1
        if cons <= config.gamma + slack and _l1(b) < best_l1:
            best_beta = b.copy()
            best_l1 = _l1(b)

    while k < config.max_outer:
        sh = evaluate(dataset, beta)
        cons = _linf(sh.score)
        trace.append((_l1(beta), cons))
        consider(beta, cons)
        try:
            nxt = l1_min_under_linf(
                sh.hessian, sh.score + sh.hessian @ beta, config.gamma, config.lp_tol
            )
        except InfeasibleGammaError as exc:
            if not retried and np.any(beta):
                retried = True
                beta = np.zeros(p)
                k += 1
                continue
            message = str(exc)
            break
        step = _linf(nxt - beta)
        beta = nxt
        k += 1
        if step <= config.outer_tol:
            converged = True
            break

    final_cons = _linf(score(dataset, beta))
    trace.append((_l1(beta), final_cons))
    consider(beta, final_cons)

    if best_beta is None:
        return EstimateResult(
            beta_hat=beta,
            gamma=config.gamma,
            outer_iters=k,
            objective=_l1(beta),
            constraint_value=final_cons,
            trace=trace,
            status="infeasible",
            message=message or "no iterate satisfied the score constraint",
        )

    polished = _scaling_polish(dataset, best_beta, config.gamma + slack)
    if _l1(polished) < best_l1:
        best_beta = polished
    constraint_value = _linf(score(dataset, best_beta))
    return EstimateResult(
        beta_hat=best_beta,
        gamma=config.gamma,
        outer_iters=k,
        objective=_l1(best_beta),
        constraint_value=constraint_value,
        trace=trace,
        status="converged" if converged else "max_iters",
        message=message,
    )


def gamma_grid_fit(dataset: SurvivalDataset, gammas, config: SolverConfig):
    """Warm-started sweep over a descending gamma grid.

    Each fit is initialized from the previous estimate.  The expected
    monotonicity of ||beta_hat||_1 in gamma is logged as a diagnostic, not
    asserted (the linearization is approximate).  Per-point solver failures
    are recorded on the result and do not abort the sweep.
    """

    gammas = [float(g) for g in gammas]
    if not gammas:
        raise ValueError("gamma grid must be nonempty")
    if any(b > a for a, b in zip(gammas, gammas[1:])):
        raise ValueError("gamma grid must be sorted in descending order")

    results = []
    init = config.init
    for g in gammas:
        cfg = SolverConfig(
            gamma=g,
            max_outer=config.max_outer,
            outer_tol=config.outer_tol,
            lp_tol=config.lp_tol,
            feasibility_slack=config.feasibility_slack,
            init=init,
        )
        try:
            res = solve_dsfph(dataset, cfg)
        except LPError as exc:
            logger.warning("gamma=%g failed: %s", g, exc)
            res = EstimateResult(
                beta_hat=np.zeros(dataset.p) if init is None else np.asarray(init, float),
                gamma=g,
                outer_iters=0,
                objective=np.nan,
                constraint_value=np.nan,
                trace=[(np.nan, np.nan)],
                status="infeasible",
                message=str(exc),
            )
        results.append(res)
        if res.status != "infeasible":
            init = res.beta_hat

    objectives = [r.objective for r in results if r.status != "infeasible"]
    if any(b < a - 1e-12 for a, b in zip(objectives, objectives[1:])):
        logger.info("gamma_grid_fit: objective not monotone along the descending grid")
    return results
