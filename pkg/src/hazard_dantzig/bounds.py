"""Quantitative tail/error bounds and the replication experiment harness.

Evaluates the analytic score tail bound and its union form, the proof
constants K3/K4/K5 read off from the truth, the l2/l1/lq error bounds, and a
Monte Carlo harness that recasts the asymptotic statements as per-replication
inequality checks conditional on the feasibility event ||U_n(beta0)||_inf <= gamma.
"""

from __future__ import annotations

import concurrent.futures
import csv
import logging
import math
import zlib
from dataclasses import dataclass, field, replace

import numpy as np

from .dantzig import SolverConfig, gamma_schedule, solve_dsfph
from .factors import (
    FactorOptions,
    compatibility_factor,
    population_matrix,
    restricted_eigenvalue,
    sup_norm_diff,
    weak_cone_invertibility_factor,
)
from .partial_likelihood import evaluate, score
from .survival_sim import SimConfig, simulate_dataset

logger = logging.getLogger(__name__)


class ExperimentError(RuntimeError):
    """Too many replications failed to produce a usable report."""


@dataclass(frozen=True)
class BoundInputs:
    """Constants and factor values feeding the error bounds."""

    k1: float
    k2: float
    k3: float
    k4: float
    k5: float
    gamma: float
    s: int
    eps_n: float
    kappa: float
    f_q: float
    re: float
    q: float


def constants_from_truth(beta0, k1: float, sim_config: SimConfig):
    """(K3, K4, K5) read off the proofs, given the truth and the baseline integral.

    K3 = 4*K1^2 * exp(K1*||beta0||_1) * int_0^tau alpha0  (the exponent bounds
    the linear predictor Z'beta0 for bounded covariates);
    K4 = 4*||beta0||_1 * exp(4*K1*||beta0||_1);
    K5 = 2*exp(4*K1*||beta0||_1).
    """

    b1 = float(np.sum(np.abs(np.asarray(beta0, dtype=float))))
    integral = sim_config.baseline.integral(sim_config.tau)
    k3 = 4.0 * k1**2 * math.exp(k1 * b1) * integral
    k4 = 4.0 * b1 * math.exp(4.0 * k1 * b1)
    k5 = 2.0 * math.exp(4.0 * k1 * b1)
    return k3, k4, k5


def tail_bound(gamma: float, n: int, k1: float, k3: float) -> float:
    """Single-coordinate exponential tail bound 2*exp(-g^2 / (2*(2*K1*g/n + K3/n)))."""

    if min(gamma, n, k1, k3) <= 0:
        raise ValueError("all tail-bound inputs must be positive")
    return 2.0 * math.exp(-(gamma**2) / (2.0 * (2.0 * k1 * gamma / n + k3 / n)))


def union_tail_bound(gamma: float, n: int, p: int, k1: float, k3: float) -> float:
    """Union bound over the p score coordinates, clamped at 1."""

    return min(p * tail_bound(gamma, n, k1, k3), 1.0)


@dataclass(frozen=True)
class TailEstimate:
    probability: float
    ci_low: float
    ci_high: float
    exceed_count: int
    reps: int

    @property
    def half_width(self) -> float:
        return 0.5 * (self.ci_high - self.ci_low)


def _replicate_seed(seed: int, *parts) -> int:
    ints = tuple(
        zlib.crc32(p.encode()) if isinstance(p, str) else int(p) for p in parts
    )
    return int(np.random.SeedSequence(entropy=(seed,) + ints).generate_state(1)[0])


def mc_score_tail(sim_config: SimConfig, gamma: float, reps: int) -> TailEstimate:
    """Empirical P(||U_n(beta0)||_inf >= gamma) with a 95% normal-approximation CI."""

    if reps < 100:
        raise ValueError("reps must be at least 100 for a meaningful tail estimate")
    beta0 = sim_config.beta0_full
    count = 0
    for rep in range(reps):
        cfg = replace(sim_config, seed=_replicate_seed(sim_config.seed, rep))
        ds = simulate_dataset(cfg)
        if float(np.max(np.abs(score(ds, beta0)))) >= gamma:
            count += 1
    phat = count / reps
    hw = 1.959963984540054 * math.sqrt(phat * (1.0 - phat) / reps)
    return TailEstimate(
        probability=phat,
        ci_low=max(0.0, phat - hw),
        ci_high=min(1.0, phat + hw),
        exceed_count=count,
        reps=reps,
    )


def theorem44_bound(k4: float, gamma: float, re: float, eps_n: float):
    """l2-squared error bound K4*gamma / (RE^2 - eps_n); None when vacuous."""

    denom = re**2 - eps_n
    if denom <= 0:
        return None
    return k4 * gamma / denom


def theorem45_bounds(k5: float, s: int, gamma: float, kappa: float, f_q: float, q: float, eps_n: float):
    """(l1 bound, lq bound), each None when its denominator is nonpositive.

    l1: 4*K5*S*gamma / (kappa^2 - 4*S*eps_n);
    lq: (2*S^(1/q)*eps_n/F_q) * (2*K5*S*gamma / (kappa^2 - 2*S*eps_n))
        + 2*K5*S^(1/q)*gamma / F_q.
    """

    if q <= 1:
        raise ValueError("q must exceed 1 for the lq bound")
    denom1 = kappa**2 - 4.0 * s * eps_n
    l1_bound = 4.0 * k5 * s * gamma / denom1 if denom1 > 0 else None
    denomq = kappa**2 - 2.0 * s * eps_n
    if denomq > 0 and f_q > 0:
        s_pow = s ** (1.0 / q)
        lq_bound = (2.0 * s_pow * eps_n / f_q) * (2.0 * k5 * s * gamma / denomq) + (
            2.0 * k5 * s_pow * gamma / f_q
        )
    else:
        lq_bound = None
    return l1_bound, lq_bound


def calibrate_k2(
    sim_config: SimConfig,
    alpha: float,
    reps: int = 200,
    quantile: float = 0.95,
    seed: int | None = None,
) -> float:
    """K2 such that gamma_schedule matches the given quantile of ||U_n(beta0)||_inf
    at the config's sample size."""

    if seed is None:
        seed = sim_config.seed
    beta0 = sim_config.beta0_full
    sups = np.empty(reps)
    for rep in range(reps):
        cfg = replace(sim_config, seed=_replicate_seed(seed, "calibrate", rep))
        ds = simulate_dataset(cfg)
        sups[rep] = float(np.max(np.abs(score(ds, beta0))))
    target_gamma = float(np.quantile(sups, quantile))
    return target_gamma * sim_config.n**alpha / math.log1p(sim_config.p)


# ---------------------------------------------------------------------------
# Replication experiment
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ExperimentConfig:
    """One consistency/bound experiment: an n grid of replicated fits."""

    sim: SimConfig
    n_grid: tuple
    reps: int
    alpha: float = 0.5
    k2: float | None = None
    calibration_reps: int = 200
    calibration_quantile: float = 0.95
    q_norm: float = 2.0
    population_n: int = 4000
    population_reps: int = 8
    max_outer: int = 50
    outer_tol: float = 1e-6
    lp_tol: float = 1e-8
    feasibility_slack: float = 1e-6
    factor_restarts: int = 64
    factor_oracle_samples: int = 20_000
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "n_grid", tuple(int(n) for n in self.n_grid))
        if not self.n_grid:
            raise ValueError("n_grid must be nonempty")
        if self.reps < 1:
            raise ValueError("reps must be at least 1")
        if not 0.0 < self.alpha <= 0.5:
            raise ValueError("schedule exponent alpha must lie in (0, 1/2]")

    def to_json(self):
        return {
            "sim": self.sim.to_json(),
            "n_grid": list(self.n_grid),
            "reps": self.reps,
            "alpha": self.alpha,
            "k2": self.k2,
            "calibration_reps": self.calibration_reps,
            "calibration_quantile": self.calibration_quantile,
            "q_norm": self.q_norm,
            "population_n": self.population_n,
            "population_reps": self.population_reps,
            "max_outer": self.max_outer,
            "outer_tol": self.outer_tol,
            "lp_tol": self.lp_tol,
            "feasibility_slack": self.feasibility_slack,
            "factor_restarts": self.factor_restarts,
            "factor_oracle_samples": self.factor_oracle_samples,
            "seed": self.seed,
        }

    @classmethod
    def from_json(cls, obj) -> "ExperimentConfig":
        return cls(
            sim=SimConfig.from_json(obj["sim"]),
            n_grid=tuple(obj["n_grid"]),
            reps=int(obj["reps"]),
            alpha=float(obj.get("alpha", 0.5)),
            k2=None if obj.get("k2") is None else float(obj["k2"]),
            calibration_reps=int(obj.get("calibration_reps", 200)),
            calibration_quantile=float(obj.get("calibration_quantile", 0.95)),
            q_norm=float(obj.get("q_norm", 2.0)),
            population_n=int(obj.get("population_n", 4000)),
            population_reps=int(obj.get("population_reps", 8)),
            max_outer=int(obj.get("max_outer", 50)),
            outer_tol=float(obj.get("outer_tol", 1e-6)),
            lp_tol=float(obj.get("lp_tol", 1e-8)),
            feasibility_slack=float(obj.get("feasibility_slack", 1e-6)),
            factor_restarts=int(obj.get("factor_restarts", 64)),
            factor_oracle_samples=int(obj.get("factor_oracle_samples", 20_000)),
            seed=int(obj.get("seed", 0)),
        )


_ROW_COLUMNS = [
    "n",
    "rep",
    "seed",
    "gamma",
    "status",
    "outer_iters",
    "err_l1",
    "err_l2",
    "err_lq",
    "beta0_feasible",
    "score_sup_at_truth",
    "eps_n",
    "bound44",
    "bound45_l1",
    "bound45_lq",
    "sat44",
    "sat45_l1",
    "sat45_lq",
    "cone_ok",
    "quad_ok",
    "objective",
    "constraint_value",
]


@dataclass
class ExperimentReport:
    config: ExperimentConfig
    k2: float
    constants: dict
    factors: dict
    population: dict
    rows: list
    aggregates: dict
    failures: list = field(default_factory=list)

    def to_json(self):
        return {
            "config": self.config.to_json(),
            "k2": self.k2,
            "constants": self.constants,
            "factors": self.factors,
            "population": self.population,
            "rows": self.rows,
            "aggregates": self.aggregates,
            "failures": self.failures,
        }

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(_ROW_COLUMNS)
            for row in self.rows:
                writer.writerow([_csv_cell(row.get(col)) for col in _ROW_COLUMNS])


def _csv_cell(value):
    if value is None:
        return ""
    if isinstance(value, bool):
        return int(value)
    if isinstance(value, float):
        return repr(value)
    return value


def _run_replication(exp: ExperimentConfig, k2: float, pop_matrix: np.ndarray, n: int, rep: int):
    """One (n, rep) cell: simulate, fit, and record errors, bounds and proof checks."""

    seed = _replicate_seed(exp.seed, "rep", n, rep)
    cfg = replace(exp.sim, n=n, seed=seed)
    ds = simulate_dataset(cfg)
    beta0 = cfg.beta0_full
    gamma = gamma_schedule(n, cfg.p, k2, exp.alpha)

    fit = solve_dsfph(
        ds,
        SolverConfig(
            gamma=gamma,
            max_outer=exp.max_outer,
            outer_tol=exp.outer_tol,
            lp_tol=exp.lp_tol,
            feasibility_slack=exp.feasibility_slack,
        ),
    )

    u0 = score(ds, beta0)
    sup_u0 = float(np.max(np.abs(u0)))
    feasible = sup_u0 <= gamma
    j0 = evaluate(ds, beta0).hessian
    eps_n = sup_norm_diff(j0, pop_matrix)

    h = fit.beta_hat - beta0
    err_l1 = float(np.sum(np.abs(h)))
    err_l2 = float(np.linalg.norm(h))
    err_lq = float(np.sum(np.abs(h) ** exp.q_norm) ** (1.0 / exp.q_norm))

    row = {
        "n": n,
        "rep": rep,
        "seed": seed,
        "gamma": gamma,
        "status": fit.status,
        "outer_iters": fit.outer_iters,
        "err_l1": err_l1,
        "err_l2": err_l2,
        "err_lq": err_lq,
        "beta0_feasible": feasible,
        "score_sup_at_truth": sup_u0,
        "eps_n": eps_n,
        "objective": fit.objective,
        "constraint_value": fit.constraint_value,
        "bound44": None,
        "bound45_l1": None,
        "bound45_lq": None,
        "sat44": None,
        "sat45_l1": None,
        "sat45_lq": None,
        "cone_ok": None,
        "quad_ok": None,
    }

    if feasible and fit.status != "infeasible":
        s = cfg.s
        mask = np.zeros(cfg.p, dtype=bool)
        mask[:s] = True
        cone_ok = float(np.sum(np.abs(h[~mask]))) <= float(np.sum(np.abs(h[mask]))) + 1e-6
        hz = ds.covariates @ h
        eta_h = float(hz.max() - hz.min())
        lhs = float(h @ j0 @ h)
        rhs = math.exp(eta_h) * 2.0 * gamma * err_l1
        quad_ok = lhs <= rhs * (1.0 + 1e-8) + 1e-12
        row["cone_ok"] = bool(cone_ok)
        row["quad_ok"] = bool(quad_ok)

    return row


def _finalize_row(row, exp, constants, factors):
    gamma = row["gamma"]
    eps_n = row["eps_n"]
    b44 = theorem44_bound(constants["k4"], gamma, factors["re"], eps_n)
    b45_l1, b45_lq = theorem45_bounds(
        constants["k5"], exp.sim.s, gamma, factors["kappa"], factors["f_q"], exp.q_norm, eps_n
    )
    row["bound44"] = b44
    row["bound45_l1"] = b45_l1
    row["bound45_lq"] = b45_lq
    if row["beta0_feasible"] and row["status"] != "infeasible":
        if b44 is not None:
            row["sat44"] = bool(row["err_l2"] ** 2 <= b44)
        if b45_l1 is not None:
            row["sat45_l1"] = bool(row["err_l1"] <= b45_l1)
        if b45_lq is not None:
            row["sat45_lq"] = bool(row["err_lq"] <= b45_lq)
    return row


def _aggregate(rows, n_grid):
    out = {}
    for n in n_grid:
        sub = [r for r in rows if r["n"] == n]
        if not sub:
            out[str(n)] = {"count": 0}
            continue
        feasible = [r for r in sub if r["beta0_feasible"]]
        sat44 = [r["sat44"] for r in sub if r["sat44"] is not None]
        sat45 = [r["sat45_l1"] for r in sub if r["sat45_l1"] is not None]
        sat45q = [r["sat45_lq"] for r in sub if r["sat45_lq"] is not None]
        out[str(n)] = {
            "count": len(sub),
            "median_err_l1": float(np.median([r["err_l1"] for r in sub])),
            "median_err_l2": float(np.median([r["err_l2"] for r in sub])),
            "median_eps_n": float(np.median([r["eps_n"] for r in sub])),
            "feasibility_rate": len(feasible) / len(sub),
            "sat44_rate": float(np.mean(sat44)) if sat44 else None,
            "sat45_l1_rate": float(np.mean(sat45)) if sat45 else None,
            "sat45_lq_rate": float(np.mean(sat45q)) if sat45q else None,
            "sat44_applicable": len(sat44),
            "sat45_l1_applicable": len(sat45),
        }
    return out


def run_experiment(exp: ExperimentConfig, jobs: int = 1) -> ExperimentReport:
    """Replicated simulate-fit-measure sweep over the n grid.

    Deterministic for a fixed config regardless of ``jobs``; individual
    replication failures are logged and excluded, and the report fails if
    more than 10% of replications error.
    """

    sim = exp.sim
    if exp.k2 is not None:
        k2 = exp.k2
    else:
        k2 = calibrate_k2(
            replace(sim, n=exp.n_grid[0]),
            exp.alpha,
            reps=exp.calibration_reps,
            quantile=exp.calibration_quantile,
            seed=_replicate_seed(exp.seed, "k2"),
        )

    pop_cfg = replace(sim, seed=_replicate_seed(exp.seed, "population"))
    pop = population_matrix(pop_cfg, n_big=exp.population_n, mc_reps=exp.population_reps)

    support = tuple(range(sim.s))
    fopts = FactorOptions(
        restarts=exp.factor_restarts,
        oracle_samples=exp.factor_oracle_samples,
        seed=_replicate_seed(exp.seed, "factors"),
    )
    factors = {
        "kappa": compatibility_factor(pop.matrix, support, fopts),
        "re": restricted_eigenvalue(pop.matrix, support, fopts),
        "f_q": weak_cone_invertibility_factor(pop.matrix, support, exp.q_norm, fopts),
    }
    k3, k4, k5 = constants_from_truth(sim.beta0_full, sim.k1, sim)
    constants = {"k1": sim.k1, "k2": k2, "k3": k3, "k4": k4, "k5": k5}

    tasks = [(n, rep) for n in exp.n_grid for rep in range(exp.reps)]
    rows = []
    failures = []

    if jobs > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=jobs) as pool:
            futures = {
                pool.submit(_run_replication, exp, k2, pop.matrix, n, rep): (n, rep)
                for n, rep in tasks
            }
            for fut in concurrent.futures.as_completed(futures):
                n, rep = futures[fut]
                try:
                    rows.append(fut.result())
                except Exception as exc:  # noqa: BLE001 - per-replication isolation
                    logger.warning("replication (n=%d, rep=%d) failed: %s", n, rep, exc)
                    failures.append({"n": n, "rep": rep, "error": str(exc)})
    else:
        for n, rep in tasks:
            try:
                rows.append(_run_replication(exp, k2, pop.matrix, n, rep))
            except Exception as exc:  # noqa: BLE001
                logger.warning("replication (n=%d, rep=%d) failed: %s", n, rep, exc)
                failures.append({"n": n, "rep": rep, "error": str(exc)})

    if len(failures) > 0.10 * len(tasks):
        raise ExperimentError(
            f"{len(failures)} of {len(tasks)} replications failed (>10%); "
            "the report would not be representative"
        )

    rows.sort(key=lambda r: (r["n"], r["rep"]))
    rows = [_finalize_row(r, exp, constants, factors) for r in rows]

    return ExperimentReport(
        config=exp,
        k2=k2,
        constants=constants,
        factors=factors,
        population={
            "n_used": pop.n_used,
            "mc_reps": pop.mc_reps,
            "stderr_sup": pop.stderr_sup,
        },
        rows=rows,
        aggregates=_aggregate(rows, exp.n_grid),
        failures=failures,
    )
