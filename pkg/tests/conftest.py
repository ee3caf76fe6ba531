"""Shared oracles and dataset builders for the test suite."""

import numpy as np

from hazard_dantzig import SimConfig, log_likelihood, score, simulate_dataset


def random_dataset(rng, n=None, p=None, censor=0.0):
    """Small random cohort with a sparse truth; returns (dataset, config)."""

    n = int(rng.integers(20, 51)) if n is None else n
    p = int(rng.integers(2, 9)) if p is None else p
    s = int(rng.integers(1, min(3, p) + 1))
    beta0 = tuple(rng.uniform(-1.0, 1.0, s).tolist())
    cfg = SimConfig(
        n=n,
        p=p,
        s=s,
        beta0_values=beta0,
        censor_rate=censor,
        tau=2.0,
        seed=int(rng.integers(0, 2**31)),
    )
    return simulate_dataset(cfg), cfg


def fd_gradient(dataset, beta, step=1e-5):
    """Central finite differences of l_n, the independent score oracle."""

    beta = np.asarray(beta, dtype=float)
    grad = np.zeros_like(beta)
    for j in range(beta.size):
        e = np.zeros_like(beta)
        e[j] = step
        grad[j] = (log_likelihood(dataset, beta + e) - log_likelihood(dataset, beta - e)) / (
            2 * step
        )
    return grad


def fd_score_jacobian(dataset, beta, step=1e-5):
    """Central finite differences of U_n; equals -J_n for a correct Hessian."""

    beta = np.asarray(beta, dtype=float)
    jac = np.zeros((beta.size, beta.size))
    for j in range(beta.size):
        e = np.zeros_like(beta)
        e[j] = step
        jac[:, j] = (score(dataset, beta + e) - score(dataset, beta - e)) / (2 * step)
    return jac
