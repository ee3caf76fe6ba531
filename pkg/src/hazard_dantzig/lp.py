"""Dense two-phase tableau simplex with Bland's rule.

Solves  min c'x  s.t.  A x <= b,  x >= 0.  Sized for the inner Dantzig steps
(a few hundred variables); reports the dual vector and the duality gap so
callers can certify optimality.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class LPError(RuntimeError):
    """Solver failure (iteration limit or numerical breakdown)."""


class LPInfeasibleError(LPError):
    """The constraint system admits no nonnegative solution."""


class LPUnboundedError(LPError):
    """The objective is unbounded below on the feasible set."""


@dataclass(frozen=True)
class LPResult:
    x: np.ndarray
    objective: float
    dual: np.ndarray
    duality_gap: float
    iterations: int
    status: str


_PIVOT_TOL = 1e-9


def _pivot(tableau, basis, row, col):
    piv = tableau[row, col]
    tableau[row] /= piv
    factors = tableau[:, col].copy()
    factors[row] = 0.0
    tableau -= np.outer(factors, tableau[row])
    # keep the pivot column numerically exact
    tableau[:, col] = 0.0
    tableau[row, col] = 1.0
    basis[row] = col


def _bland_iterate(tableau, basis, allowed, max_iter):
    """Run simplex on the (m+1)-row tableau; last row is the reduced-cost row."""

    m = tableau.shape[0] - 1
    iterations = 0
    while True:
        red = tableau[-1, :-1]
        candidates = np.flatnonzero(allowed & (red < -_PIVOT_TOL))
        if candidates.size == 0:
            return iterations
        col = int(candidates[0])  # Bland: smallest eligible index enters
        colvals = tableau[:m, col]
        rows = np.flatnonzero(colvals > _PIVOT_TOL)
        if rows.size == 0:
            raise LPUnboundedError("objective unbounded along entering column")
        ratios = tableau[rows, -1] / colvals[rows]
        best = ratios.min()
        tied = rows[np.flatnonzero(ratios <= best + _PIVOT_TOL * (1.0 + abs(best)))]
        row = int(tied[np.argmin(basis[tied])])  # Bland: smallest basic index leaves
        _pivot(tableau, basis, row, col)
        iterations += 1
        if iterations > max_iter:
            raise LPError(f"simplex iteration limit ({max_iter}) exceeded")


def _set_cost_row(tableau, basis, cost):
    """Reduced costs for the current basis: c - c_B B^{-1} A, objective -c_B x_B."""

    tableau[-1, :-1] = cost
    tableau[-1, -1] = 0.0
    for i, bj in enumerate(basis):
        cb = cost[bj]
        if cb != 0.0:
            tableau[-1] -= cb * tableau[i]


def solve_lp(c, a_ub, b_ub, max_iter: int | None = None) -> LPResult:
    """Minimize ``c @ x`` subject to ``a_ub @ x <= b_ub`` and ``x >= 0``."""

    c = np.asarray(c, dtype=float)
    a = np.array(a_ub, dtype=float)
    b = np.array(b_ub, dtype=float)
    m, nv = a.shape
    if c.shape != (nv,) or b.shape != (m,):
        raise ValueError("inconsistent LP dimensions")
    if max_iter is None:
        max_iter = 2000 + 50 * (m + nv)

    # equality form: rows with b < 0 are negated, their slack enters with -1
    # and needs an artificial variable to seed the basis
    neg = b < 0
    a = np.where(neg[:, None], -a, a)
    b = np.where(neg, -b, b)
    slack = np.diag(np.where(neg, -1.0, 1.0))
    art_rows = np.flatnonzero(neg)
    n_art = art_rows.size
    art = np.zeros((m, n_art))
    art[art_rows, np.arange(n_art)] = 1.0

    n_total = nv + m + n_art
    tableau = np.zeros((m + 1, n_total + 1))
    tableau[:m, :nv] = a
    tableau[:m, nv : nv + m] = slack
    tableau[:m, nv + m :-1] = art
    tableau[:m, -1] = b

    basis = np.empty(m, dtype=int)
    basis[~neg] = nv + np.flatnonzero(~neg)
    basis[art_rows] = nv + m + np.arange(n_art)

    scale = 1.0 + float(np.abs(b).max(initial=0.0))
    iterations = 0

    if n_art:
        phase1_cost = np.zeros(n_total)
        phase1_cost[nv + m :] = 1.0
        _set_cost_row(tableau, basis, phase1_cost)
        allowed = np.ones(n_total, dtype=bool)
        iterations += _bland_iterate(tableau, basis, allowed, max_iter)
        if -tableau[-1, -1] > 1e-8 * scale:
            raise LPInfeasibleError("phase-1 optimum positive: no feasible point")
        # drive any residual (zero-valued) artificials out of the basis
        for i in range(m):
            if basis[i] >= nv + m:
                cols = np.flatnonzero(np.abs(tableau[i, : nv + m]) > _PIVOT_TOL)
                if cols.size:
                    _pivot(tableau, basis, i, int(cols[0]))

    cost = np.zeros(n_total)
    cost[:nv] = c
    _set_cost_row(tableau, basis, cost)
    allowed = np.ones(n_total, dtype=bool)
    allowed[nv + m :] = False
    iterations += _bland_iterate(tableau, basis, allowed, max_iter)

    x_full = np.zeros(n_total)
    x_full[basis] = tableau[:m, -1]
    x = x_full[:nv]
    objective = float(c @ x)

    # dual from the basis: y solves B' y = c_B in the (negated-rows) system
    bmat = np.zeros((m, m))
    for i, bj in enumerate(basis):
        if bj < nv:
            bmat[:, i] = a[:, bj]
        elif bj < nv + m:
            bmat[:, i] = slack[:, bj - nv]
        else:
            bmat[:, i] = art[:, bj - nv - m]
    cb = cost[basis]
    y = np.linalg.solve(bmat.T, cb)
    duality_gap = abs(objective - float(b @ y))

    return LPResult(
        x=x,
        objective=objective,
        dual=y,
        duality_gap=duality_gap,
        iterations=iterations,
        status="optimal",
    )
