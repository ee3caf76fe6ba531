"""Estimator contracts: schedule formula, trivial solutions, feasibility
certificates, local l1-minimality, grid sweeps."""

from dataclasses import replace

import numpy as np
import pytest
from numpy.testing import assert_allclose

from hazard_dantzig import (
    SimConfig,
    SolverConfig,
    SurvivalDataset,
    calibrate_k2,
    gamma_grid_fit,
    gamma_schedule,
    score,
    simulate_dataset,
    solve_dsfph,
)


def test_gamma_schedule_formula():
    assert_allclose(gamma_schedule(100, 99, 1.0, 0.5), np.log(100) / 10)
    assert_allclose(gamma_schedule(50, 1, 2.0, 0.3), 2.0 * np.log(2) / 50**0.3)
    assert_allclose(
        gamma_schedule(200, 10, 1.0, 0.5), gamma_schedule(100, 10, 1.0, 0.5) / np.sqrt(2)
    )


@pytest.mark.parametrize("alpha", [0.0, 0.6, -0.1, 1.0])
def test_gamma_schedule_rejects_bad_alpha(alpha):
    with pytest.raises(ValueError, match="alpha"):
        gamma_schedule(100, 10, 1.0, alpha)


def _fixture_dataset(seed=11, n=200, p=20):
    cfg = SimConfig(n=n, p=p, s=3, beta0_values=(1.0, -1.0, 0.5), seed=seed, tau=2.0)
    return simulate_dataset(cfg), cfg


def test_large_gamma_returns_zero_in_one_iteration():
    ds, cfg = _fixture_dataset()
    gamma = float(np.max(np.abs(score(ds, np.zeros(cfg.p))))) + 0.1
    res = solve_dsfph(ds, SolverConfig(gamma=gamma))
    assert res.status == "converged"
    assert res.outer_iters == 1
    assert np.all(res.beta_hat == 0.0)
    assert res.objective == 0.0


def test_identical_covariates_score_is_constant():
    z = np.tile([[0.4, -0.2]], (15, 1))
    ds = SurvivalDataset(
        times=np.linspace(0.2, 2.0, 15), status=np.ones(15, dtype=int),
        covariates=z, tau=2.0,
    )
    u0 = float(np.max(np.abs(score(ds, np.zeros(2)))))
    res = solve_dsfph(ds, SolverConfig(gamma=u0 + 1e-6))
    assert res.status == "converged"
    assert np.all(res.beta_hat == 0.0)
    res2 = solve_dsfph(ds, SolverConfig(gamma=u0 * 0.5, max_outer=10))
    assert res2.status == "infeasible"


def test_converged_certificate_and_l1_not_worse_than_truth():
    ds, cfg = _fixture_dataset()
    beta0 = cfg.beta0_full
    gamma = float(np.max(np.abs(score(ds, beta0)))) * 1.15  # truth feasible
    res = solve_dsfph(ds, SolverConfig(gamma=gamma))
    assert res.status == "converged"
    assert res.constraint_value <= gamma + 1e-6
    assert res.objective <= np.abs(beta0).sum() + 1e-6
    h = res.beta_hat - beta0
    assert np.abs(h[3:]).sum() <= np.abs(h[:3]).sum() + 1e-6


def test_determinism():
    ds, cfg = _fixture_dataset(seed=23)
    cfgs = SolverConfig(gamma=0.12)
    a = solve_dsfph(ds, cfgs)
    b = solve_dsfph(ds, cfgs)
    assert np.array_equal(a.beta_hat, b.beta_hat)
    assert a.trace == b.trace
    assert a.status == b.status


def test_no_strictly_better_feasible_point_nearby():
    # local perturbations projected back to feasibility by line search toward
    # beta_hat must not beat it by more than 1e-4 in l1 norm
    ds, cfg = _fixture_dataset(seed=31, n=150, p=10)
    beta0 = cfg.beta0_full
    gamma = float(np.max(np.abs(score(ds, beta0)))) * 1.1
    res = solve_dsfph(ds, SolverConfig(gamma=gamma))
    assert res.status == "converged"
    rng = np.random.default_rng(77)
    threshold = gamma + 1e-6
    for _ in range(1000):
        cand = res.beta_hat + rng.normal(0, 0.05, cfg.p)
        lo, hi = 0.0, 1.0
        if float(np.max(np.abs(score(ds, cand)))) > threshold:
            for _ in range(30):
                mid = 0.5 * (lo + hi)
                point = cand + mid * (res.beta_hat - cand)
                if float(np.max(np.abs(score(ds, point)))) <= threshold:
                    hi = mid
                else:
                    lo = mid
            cand = cand + hi * (res.beta_hat - cand)
        assert np.abs(cand).sum() >= res.objective - 1e-4


def test_warm_start_config():
    ds, cfg = _fixture_dataset(seed=41)
    warm = np.full(cfg.p, 0.01)
    res = solve_dsfph(ds, SolverConfig(gamma=0.15, init=warm))
    assert res.status in ("converged", "max_iters")
    assert res.constraint_value <= 0.15 + 1e-6


def test_gamma_grid_singleton_matches_single_solve():
    ds, cfg = _fixture_dataset(seed=51)
    cfgs = SolverConfig(gamma=0.2)
    single = solve_dsfph(ds, cfgs)
    grid = gamma_grid_fit(ds, [0.2], cfgs)
    assert len(grid) == 1
    assert np.array_equal(grid[0].beta_hat, single.beta_hat)


def test_gamma_grid_head_is_zero_and_traces_nonempty():
    ds, cfg = _fixture_dataset(seed=61)
    u0 = float(np.max(np.abs(score(ds, np.zeros(cfg.p)))))
    gammas = [u0 + 0.05, u0 * 0.8, u0 * 0.6, u0 * 0.4, u0 * 0.3]
    results = gamma_grid_fit(ds, gammas, SolverConfig(gamma=gammas[0]))
    assert len(results) == 5
    assert np.all(results[0].beta_hat == 0.0)
    assert all(len(r.trace) >= 1 for r in results)


def test_gamma_grid_requires_descending():
    ds, _ = _fixture_dataset(seed=71, n=50, p=4)
    with pytest.raises(ValueError, match="descending"):
        gamma_grid_fit(ds, [0.1, 0.2], SolverConfig(gamma=0.1))
    with pytest.raises(ValueError, match="nonempty"):
        gamma_grid_fit(ds, [], SolverConfig(gamma=0.1))


def test_calibrated_gamma_keeps_truth_feasible():
    cfg = SimConfig(n=200, p=20, s=3, beta0_values=(1.0, -1.0, 0.5), seed=123, tau=2.0)
    k2 = calibrate_k2(cfg, alpha=0.5, reps=100, quantile=0.95, seed=321)
    gamma = gamma_schedule(cfg.n, cfg.p, k2, 0.5)
    feasible = 0
    for rep in range(20):
        ds = simulate_dataset(replace(cfg, seed=9000 + rep))
        if float(np.max(np.abs(score(ds, cfg.beta0_full)))) <= gamma:
            feasible += 1
    assert feasible >= 16
