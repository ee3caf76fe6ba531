"""Score/Hessian correctness against finite-difference oracles, plus the
curvature sandwich and martingale centering."""

from dataclasses import replace

import numpy as np
import pytest
from numpy.testing import assert_allclose

from conftest import fd_gradient, fd_score_jacobian, random_dataset
from hazard_dantzig import (
    EmptyRiskSetError,
    SimConfig,
    SurvivalDataset,
    evaluate,
    log_likelihood,
    sandwich_check,
    score,
    simulate_dataset,
    snapshot,
)


def _dataset_from_arrays(times, status, covs, tau=None):
    covs = np.asarray(covs, dtype=float)
    return SurvivalDataset(
        times=np.asarray(times, float),
        status=np.asarray(status),
        covariates=covs,
        tau=max(times) if tau is None else tau,
    )


def test_snapshot_single_subject():
    z = np.array([[0.4, -0.2]])
    ds = _dataset_from_arrays([1.0], [1], z)
    beta = np.array([0.5, 1.0])
    snap = snapshot(ds, beta, 0.5)
    w = np.exp(z[0] @ beta)
    assert_allclose(snap.s0, w)
    assert_allclose(snap.s1, w * z[0])
    assert_allclose(snap.s2, w * np.outer(z[0], z[0]))


def test_snapshot_at_beta_zero_counts_risk_set():
    rng = np.random.default_rng(8)
    z = rng.uniform(-1, 1, (7, 3))
    ds = _dataset_from_arrays(np.linspace(1, 7, 7), np.ones(7, int), z)
    snap = snapshot(ds, np.zeros(3), 0.5)
    assert_allclose(snap.s0, 7.0)
    assert_allclose(snap.s1, z.sum(axis=0))
    assert_allclose(snap.s2, z.T @ z)


def test_snapshot_empty_risk_set():
    ds = _dataset_from_arrays([1.0, 2.0], [1, 1], np.zeros((2, 2)))
    with pytest.raises(EmptyRiskSetError, match="empty risk set"):
        snapshot(ds, np.zeros(2), 5.0)


def test_snapshot_weighted_mean_in_convex_hull():
    rng = np.random.default_rng(11)
    for _ in range(20):
        ds, _ = random_dataset(rng, n=int(rng.integers(3, 11)), p=3)
        beta = rng.normal(0, 1, 3)
        t = float(rng.uniform(0, ds.times.max()))
        at_risk = ds.covariates[ds.times >= t]
        snap = snapshot(ds, beta, t)
        mean = snap.s1 / snap.s0
        assert np.all(mean >= at_risk.min(axis=0) - 1e-12)
        assert np.all(mean <= at_risk.max(axis=0) + 1e-12)


def test_single_event_score_is_zero():
    ds = _dataset_from_arrays([1.0], [1], [[0.3, -0.8]])
    sh = evaluate(ds, np.array([0.2, 0.1]))
    assert_allclose(sh.score, 0.0, atol=1e-15)


def test_identical_covariates_zero_score_and_hessian():
    z = np.tile([[0.4, -0.1, 0.2]], (12, 1))
    ds = _dataset_from_arrays(np.linspace(0.5, 3, 12), np.ones(12, int), z)
    sh = evaluate(ds, np.array([1.0, -2.0, 0.5]))
    assert_allclose(sh.score, 0.0, atol=1e-14)
    assert_allclose(sh.hessian, 0.0, atol=1e-14)


def test_score_matches_finite_differences():
    rng = np.random.default_rng(100)
    for _ in range(8):
        ds, cfg = random_dataset(rng)
        beta = rng.normal(0, 0.5, cfg.p)
        sh = evaluate(ds, beta)
        fd = fd_gradient(ds, beta)
        denom = 1 + np.max(np.abs(sh.score))
        assert np.max(np.abs(sh.score - fd)) <= 1e-6 * denom


def test_hessian_matches_finite_differences():
    rng = np.random.default_rng(200)
    for _ in range(5):
        ds, cfg = random_dataset(rng)
        beta = rng.normal(0, 0.5, cfg.p)
        sh = evaluate(ds, beta)
        jac = fd_score_jacobian(ds, beta)
        denom = 1 + np.max(np.abs(sh.hessian))
        assert np.max(np.abs(sh.hessian + jac)) <= 1e-5 * denom


def test_hessian_psd_and_loglik_concave():
    rng = np.random.default_rng(300)
    ds, cfg = random_dataset(rng, n=40, p=5)
    for _ in range(40):
        beta = rng.normal(0, 1.0, cfg.p)
        sh = evaluate(ds, beta)
        eig = np.linalg.eigvalsh(sh.hessian)
        assert eig[0] >= -1e-10 * max(np.trace(sh.hessian), 1e-30)
    for _ in range(40):
        b1 = rng.normal(0, 1.0, cfg.p)
        b2 = rng.normal(0, 1.0, cfg.p)
        mid = log_likelihood(ds, 0.5 * (b1 + b2))
        assert mid >= 0.5 * (log_likelihood(ds, b1) + log_likelihood(ds, b2)) - 1e-10


def test_large_beta_stays_finite():
    rng = np.random.default_rng(9)
    ds, cfg = random_dataset(rng, n=30, p=4)
    beta = rng.normal(0, 1, cfg.p) * 40.0
    sh = evaluate(ds, beta)
    assert np.all(np.isfinite(sh.score))
    assert np.all(np.isfinite(sh.hessian))
    assert np.isfinite(sh.loglik)


def test_tied_events_share_risk_set():
    # two events at the same time: both jumps integrate against the same S-moments
    z = np.array([[0.5], [-0.5], [0.2]])
    ds = _dataset_from_arrays([1.0, 1.0, 2.0], [1, 1, 1], z)
    beta = np.array([0.3])
    sh = evaluate(ds, beta)
    w = np.exp(z[:, 0] * beta[0])
    s0_t1, s1_t1 = w.sum(), (w * z[:, 0]).sum()
    u_manual = (z[0, 0] - s1_t1 / s0_t1) + (z[1, 0] - s1_t1 / s0_t1) + (z[2, 0] - z[2, 0])
    assert_allclose(sh.score[0], u_manual / 3, rtol=1e-12)


def test_sandwich_zero_direction():
    rng = np.random.default_rng(4)
    ds, cfg = random_dataset(rng, n=25, p=4)
    lower, middle, upper, eta = sandwich_check(ds, rng.normal(0, 1, cfg.p), np.zeros(cfg.p))
    assert (lower, middle, upper, eta) == (0.0, 0.0, 0.0, 0.0)


def test_sandwich_identical_covariates():
    z = np.tile([[0.3, -0.6]], (10, 1))
    ds = _dataset_from_arrays(np.linspace(0.5, 2, 10), np.ones(10, int), z)
    lower, middle, upper, eta = sandwich_check(ds, np.zeros(2), np.array([0.4, 0.2]))
    assert lower == middle == upper == 0.0


def test_sandwich_holds_on_random_triples():
    rng = np.random.default_rng(500)
    for _ in range(60):
        ds, cfg = random_dataset(rng)
        beta = rng.normal(0, 0.5, cfg.p)
        h = rng.uniform(-0.5, 0.5, cfg.p)
        lower, middle, upper, _ = sandwich_check(ds, beta, h)
        slack = 1e-8 * (1 + upper)
        assert lower - slack <= middle <= upper + slack


def test_martingale_centering_at_truth():
    cfg = SimConfig(n=100, p=4, s=2, beta0_values=(0.8, -0.4), seed=0, tau=2.0)
    b0 = cfg.beta0_full
    reps = 200
    us = np.array(
        [score(simulate_dataset(replace(cfg, seed=r)), b0) for r in range(reps)]
    )
    mean = us.mean(axis=0)
    sd = us.std(axis=0, ddof=1)
    assert np.all(np.abs(mean) <= 4 * sd / np.sqrt(reps))


def test_scorehessian_json():
    rng = np.random.default_rng(12)
    ds, cfg = random_dataset(rng, n=20, p=3)
    payload = evaluate(ds, np.zeros(cfg.p)).to_json()
    assert set(payload) == {"score", "hessian", "loglik"}
    assert len(payload["hessian"]) == cfg.p
