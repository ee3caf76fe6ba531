"""Cone-restricted matrix functionals, UUP constants, and the population surrogate.

The compatibility factor, weak cone invertibility factor, restricted
eigenvalue and the 2S-support factor are infima of smooth ratios over the
cone C_T0 = {h : ||h_{T0^c}||_1 <= ||h_{T0}||_1}.  They are approximated by
batched projected gradient descent with random restarts under a fixed
normalization (||h_{T0}||_1 = 1 for the first two, ||h||_2 = 1 for the last
two), cross-checked against a dense random-direction oracle; the reported
value is the smaller of the two, i.e. an upper bound on the true infimum.

The restricted isometry and restricted orthogonality constants are exact
subset enumerations (eigenvalues / singular values of small blocks), with an
optional sampled fallback when the enumeration budget is exceeded.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, replace

import numpy as np

from .partial_likelihood import evaluate
from .survival_sim import SimConfig, simulate_dataset


class EnumerationBudgetError(RuntimeError):
    """Exact subset enumeration would exceed the budget; use the sampled variant."""


@dataclass(frozen=True)
class SupportSet:
    """Candidate true-support index set (0-based), validated against p."""

    indices: tuple
    p: int

    def __post_init__(self):
        idx = tuple(sorted(int(i) for i in self.indices))
        object.__setattr__(self, "indices", idx)
        if not idx:
            raise ValueError("support set must be nonempty")
        if len(set(idx)) != len(idx):
            raise ValueError("support indices must be distinct")
        if idx[0] < 0 or idx[-1] >= self.p:
            raise ValueError(f"support indices must lie in [0, {self.p - 1}]")

    def __len__(self):
        return len(self.indices)

    def mask(self) -> np.ndarray:
        m = np.zeros(self.p, dtype=bool)
        m[list(self.indices)] = True
        return m


@dataclass(frozen=True)
class FactorOptions:
    restarts: int = 64
    iterations: int = 400
    step0: float = 0.3
    step_decay: float = 0.985
    oracle_samples: int = 100_000
    seed: int = 0


@dataclass(frozen=True)
class MinimizeDiagnostics:
    restarts: int
    best_h: np.ndarray
    descent_value: float
    oracle_value: float

    @property
    def oracle_gap(self) -> float:
        return self.oracle_value - self.descent_value


@dataclass(frozen=True)
class FactorReport:
    """All factors for one (matrix, support) pair, with optimizer diagnostics."""

    kappa: float
    f_q: dict
    re: float
    phi_2s: float
    delta_n: dict
    theta: dict
    diagnostics: dict

    def to_json(self):
        return {
            "kappa": self.kappa,
            "f_q": {str(q): v for q, v in self.f_q.items()},
            "re": self.re,
            "phi_2s": self.phi_2s,
            "delta_n": {str(n): v for n, v in self.delta_n.items()},
            "theta": {f"{s},{sp}": v for (s, sp), v in self.theta.items()},
            "diagnostics": {
                name: {
                    "restarts": d.restarts,
                    "best_h": d.best_h.tolist(),
                    "descent_value": d.descent_value,
                    "oracle_value": d.oracle_value,
                    "oracle_gap": d.oracle_gap,
                }
                for name, d in self.diagnostics.items()
            },
        }


@dataclass(frozen=True)
class PopulationMatrix:
    """Monte Carlo surrogate for the deterministic score-curvature matrix."""

    matrix: np.ndarray
    n_used: int
    mc_reps: int
    stderr_sup: float


# ---------------------------------------------------------------------------
# Shared geometry helpers (all operate on batches H of shape (R, p))
# ---------------------------------------------------------------------------

def _check_square_symmetric(matrix) -> np.ndarray:
    m = np.asarray(matrix, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError("matrix must be square")
    scale = float(np.abs(m).max(initial=0.0))
    if scale > 0 and float(np.abs(m - m.T).max()) > 1e-8 * scale:
        raise ValueError("matrix must be symmetric")
    return 0.5 * (m + m.T)


def _support(matrix, support) -> SupportSet:
    if isinstance(support, SupportSet):
        if support.p != matrix.shape[0]:
            raise ValueError("support set dimension does not match the matrix")
        return support
    return SupportSet(tuple(support), matrix.shape[0])


def _cone_scale(h_batch, on_mask):
    """Scale off-support parts down so ||h_off||_1 <= ||h_on||_1 (in place)."""

    on = np.abs(h_batch[:, on_mask]).sum(axis=1)
    off = np.abs(h_batch[:, ~on_mask]).sum(axis=1)
    bad = off > on
    if np.any(bad):
        factor = np.ones(h_batch.shape[0])
        factor[bad] = on[bad] / off[bad]
        h_batch[:, ~on_mask] *= factor[:, None]
    return h_batch


def _slice_normalize(h_batch, on_mask, rng):
    """Impose ||h_{T0}||_1 = 1 then the cone constraint; reseed degenerate rows."""

    on = np.abs(h_batch[:, on_mask]).sum(axis=1)
    dead = on < 1e-12
    if np.any(dead):
        fresh = rng.normal(size=(int(dead.sum()), h_batch.shape[1]))
        h_batch[dead] = fresh
        on = np.abs(h_batch[:, on_mask]).sum(axis=1)
    h_batch /= on[:, None]
    return _cone_scale(h_batch, on_mask)


def _sphere_normalize(h_batch, on_mask, rng):
    """Cone-project then impose ||h||_2 = 1 (cone is scale-invariant)."""

    _cone_scale(h_batch, on_mask)
    norm = np.linalg.norm(h_batch, axis=1)
    dead = norm < 1e-12
    if np.any(dead):
        h_batch[dead] = rng.normal(size=(int(dead.sum()), h_batch.shape[1]))
        _cone_scale(h_batch, on_mask)
        norm = np.linalg.norm(h_batch, axis=1)
    h_batch /= norm[:, None]
    return h_batch


def _quad_form(m, h_batch):
    return np.maximum(np.einsum("ij,jk,ik->i", h_batch, m, h_batch), 0.0)


def _lq_norm(h_batch, q):
    a = np.abs(h_batch)
    amax = a.max(axis=1)
    amax = np.where(amax > 0, amax, 1.0)
    # factor out the max to keep powers of q up to 64 in range
    return amax * (np.sum((a / amax[:, None]) ** q, axis=1)) ** (1.0 / q)


def _lq_grad(h_batch, q):
    """Row-wise gradient of ||h||_q (safe for large q via normalized ratios)."""

    a = np.abs(h_batch)
    nq = _lq_norm(h_batch, q)
    nq = np.where(nq > 0, nq, 1.0)
    ratio = a / nq[:, None]
    return np.sign(h_batch) * ratio ** (q - 1.0)


def _structured_starts(p, t0_idx, matrix):
    """Deterministic candidate minimizers: support sign patterns, coordinates,
    and the cone projection of the smallest eigenvector."""

    rows = []
    s = len(t0_idx)
    if s <= 10:
        for signs in itertools.product((1.0, -1.0), repeat=s):
            h = np.zeros(p)
            h[list(t0_idx)] = np.asarray(signs) / s
            rows.append(h)
    for j in t0_idx:
        for sign in (1.0, -1.0):
            h = np.zeros(p)
            h[j] = sign
            rows.append(h)
    w, v = np.linalg.eigh(matrix)
    rows.append(v[:, 0].copy())
    rows.append(-v[:, 0])
    return np.asarray(rows)


def _minimize_cone(matrix, t0, objective, grad, normalize, opts, oracle_batch=20_000):
    """Batched projected gradient descent + random-direction oracle.

    ``objective``/``grad`` consume a normalized batch; ``normalize`` maps an
    arbitrary batch into the feasible normalized set.  Returns value, argmin
    and diagnostics; value = min(descent, oracle) so it never exceeds the
    objective at any oracle sample.
    """

    rng = np.random.default_rng(opts.seed)
    p = matrix.shape[0]
    h = np.vstack(
        [
            _structured_starts(p, t0.indices, matrix),
            rng.normal(size=(opts.restarts, p)),
        ]
    )
    h = normalize(h, rng)

    best_val = np.inf
    best_h = h[0].copy()
    step = opts.step0
    for _ in range(opts.iterations):
        vals = objective(h)
        i = int(np.argmin(vals))
        if vals[i] < best_val:
            best_val = float(vals[i])
            best_h = h[i].copy()
        g = grad(h)
        gnorm = np.linalg.norm(g, axis=1)
        gnorm = np.where(gnorm > 0, gnorm, 1.0)
        h = h - step * (g / gnorm[:, None])
        h = normalize(h, rng)
        step *= opts.step_decay
    vals = objective(h)
    i = int(np.argmin(vals))
    if vals[i] < best_val:
        best_val = float(vals[i])
        best_h = h[i].copy()
    descent_value = best_val

    oracle_value = np.inf
    oracle_h = best_h
    remaining = opts.oracle_samples
    while remaining > 0:
        take = min(remaining, oracle_batch)
        remaining -= take
        sample = normalize(rng.normal(size=(take, p)), rng)
        vals = objective(sample)
        i = int(np.argmin(vals))
        if vals[i] < oracle_value:
            oracle_value = float(vals[i])
            oracle_h = sample[i].copy()

    if oracle_value < descent_value:
        value, h_best = oracle_value, oracle_h
    else:
        value, h_best = descent_value, best_h
    diag = MinimizeDiagnostics(
        restarts=opts.restarts,
        best_h=h_best,
        descent_value=descent_value,
        oracle_value=oracle_value,
    )
    return value, diag


# ---------------------------------------------------------------------------
# Cone factors
# ---------------------------------------------------------------------------

def _kappa_impl(m, t0, opts):
    mask = t0.mask()
    s = len(t0)

    def objective(h):
        return math.sqrt(s) * np.sqrt(_quad_form(m, h))

    def grad(h):
        return h @ m  # descent direction for h'Mh; positive scaling is immaterial

    def normalize(h, rng):
        return _slice_normalize(h, mask, rng)

    return _minimize_cone(m, t0, objective, grad, normalize, opts)


def compatibility_factor(matrix, support, opts: FactorOptions | None = None) -> float:
    """inf over the cone of sqrt(S) * sqrt(h'Mh) / ||h_{T0}||_1."""

    m = _check_square_symmetric(matrix)
    t0 = _support(m, support)
    value, _ = _kappa_impl(m, t0, opts or FactorOptions())
    return value


def _fq_impl(m, t0, q, opts):
    mask = t0.mask()
    s = len(t0)
    pref = s ** (1.0 / q)

    def objective(h):
        return pref * np.sqrt(_quad_form(m, h)) / _lq_norm(h, q)

    def grad(h):
        # gradient of log objective: Mh/(h'Mh) - grad||h||_q / ||h||_q
        quad = np.maximum(_quad_form(m, h), 1e-300)
        nq = _lq_norm(h, q)
        nq = np.where(nq > 0, nq, 1.0)
        return (h @ m) / quad[:, None] - _lq_grad(h, q) / nq[:, None]

    def normalize(h, rng):
        return _slice_normalize(h, mask, rng)

    return _minimize_cone(m, t0, objective, grad, normalize, opts)


def weak_cone_invertibility_factor(matrix, support, q: float, opts=None) -> float:
    """inf over the cone of S^(1/q) * sqrt(h'Mh) / (||h_{T0}||_1 ||h||_q).

    Evaluated under the normalization ||h_{T0}||_1 = 1, which makes the
    displayed ratio well-posed and scale-equivariant (value scales by sqrt(c)
    when the matrix scales by c).
    """

    if q < 1:
        raise ValueError("q must be at least 1")
    m = _check_square_symmetric(matrix)
    t0 = _support(m, support)
    value, _ = _fq_impl(m, t0, float(q), opts or FactorOptions())
    return value


def _re_impl(m, t0, opts):
    mask = t0.mask()

    def objective(h):
        return np.sqrt(_quad_form(m, h))

    def grad(h):
        return h @ m

    def normalize(h, rng):
        return _sphere_normalize(h, mask, rng)

    return _minimize_cone(m, t0, objective, grad, normalize, opts)


def restricted_eigenvalue(matrix, support, opts: FactorOptions | None = None) -> float:
    """inf over the cone of sqrt(h'Mh) / ||h||_2."""

    m = _check_square_symmetric(matrix)
    t0 = _support(m, support)
    value, _ = _re_impl(m, t0, opts or FactorOptions())
    return value


def _admissible_supersets(t0_idx, p, size_cap):
    """All T with T0 <= T and |T| <= size_cap."""

    rest = [j for j in range(p) if j not in set(t0_idx)]
    extra_max = size_cap - len(t0_idx)
    for k in range(extra_max + 1):
        for extra in itertools.combinations(rest, k):
            yield tuple(sorted(t0_idx + extra))


def _phi_normalize(h, t0_mask, t_mask, rng):
    """Feasibility map for D_{T0,T}: clip off-T entries to the smallest
    |h_j| over T \\ T0, re-impose the cone, then l2-normalize."""

    extra = t_mask & ~t0_mask
    if extra.any():
        cap = np.min(np.abs(h[:, extra]), axis=1)
        h[:, ~t_mask] = np.clip(h[:, ~t_mask], -cap[:, None], cap[:, None])
    _cone_scale(h, t0_mask)
    norm = np.linalg.norm(h, axis=1)
    dead = norm < 1e-12
    if np.any(dead):
        h[dead] = rng.normal(size=(int(dead.sum()), h.shape[1]))
        return _phi_normalize(h, t0_mask, t_mask, rng)
    h /= norm[:, None]
    return h


def phi_2s(matrix, support, opts: FactorOptions | None = None) -> float:
    """inf over T >= T0 (|T| <= 2S) and h in D_{T0,T} of sqrt(h'Mh) / ||h_T||_2."""

    m = _check_square_symmetric(matrix)
    t0 = _support(m, support)
    opts = opts or FactorOptions()
    p = m.shape[0]
    s = len(t0)
    if 2 * s > p:
        raise ValueError(f"phi_2s needs 2S <= p (got S={s}, p={p})")

    t0_mask = t0.mask()
    subsets = list(_admissible_supersets(t0.indices, p, 2 * s))
    per_t = replace(
        opts,
        restarts=max(8, opts.restarts // 4),
        oracle_samples=max(2000, opts.oracle_samples // len(subsets)),
    )

    best = np.inf
    for t_idx in subsets:
        t_mask = np.zeros(p, dtype=bool)
        t_mask[list(t_idx)] = True

        def objective(h, t_mask=t_mask):
            denom = np.linalg.norm(h[:, t_mask], axis=1)
            denom = np.where(denom > 1e-300, denom, 1e-300)
            return np.sqrt(_quad_form(m, h)) / denom

        def grad(h, t_mask=t_mask):
            quad = np.maximum(_quad_form(m, h), 1e-300)
            denom = np.maximum(np.sum(h[:, t_mask] ** 2, axis=1), 1e-300)
            g = (h @ m) / quad[:, None]
            g[:, t_mask] -= h[:, t_mask] / denom[:, None]
            return g

        def normalize(h, rng, t_mask=t_mask):
            return _phi_normalize(h, t0_mask, t_mask, rng)

        value, _ = _minimize_cone(m, t0, objective, grad, normalize, per_t)
        best = min(best, value)
    return best


# ---------------------------------------------------------------------------
# UUP constants: exact enumeration with sampled fallback
# ---------------------------------------------------------------------------

def _subset_count(p, sizes):
    return sum(math.comb(p, k) for k in sizes)


def restricted_isometry(matrix, n_active: int, budget: int = 1_000_000) -> float:
    """delta_N: worst eigenvalue deviation from 1 over all principal blocks
    with at most ``n_active`` rows, clamped below at 0."""

    m = _check_square_symmetric(matrix)
    p = m.shape[0]
    if not 1 <= n_active <= p:
        raise ValueError("N must lie in [1, p]")
    if _subset_count(p, range(1, n_active + 1)) > budget:
        raise EnumerationBudgetError(
            "too many subsets for exact enumeration; use restricted_isometry_sampled"
        )
    worst = 0.0
    for k in range(1, n_active + 1):
        for t in itertools.combinations(range(p), k):
            eig = np.linalg.eigvalsh(m[np.ix_(t, t)])
            worst = max(worst, eig[-1] - 1.0, 1.0 - eig[0])
    return max(worst, 0.0)


def restricted_isometry_sampled(matrix, n_active, samples=20_000, seed=0):
    """Sampled delta_N over random size-N subsets; returns (value, coverage)."""

    m = _check_square_symmetric(matrix)
    p = m.shape[0]
    if not 1 <= n_active <= p:
        raise ValueError("N must lie in [1, p]")
    rng = np.random.default_rng(seed)
    worst = 0.0
    seen = set()
    for _ in range(samples):
        t = tuple(sorted(rng.choice(p, size=n_active, replace=False).tolist()))
        seen.add(t)
        eig = np.linalg.eigvalsh(m[np.ix_(t, t)])
        worst = max(worst, eig[-1] - 1.0, 1.0 - eig[0])
    coverage = len(seen) / math.comb(p, n_active)
    return max(worst, 0.0), coverage


def restricted_orthogonality(matrix, s1: int, s2: int, budget: int = 1_000_000) -> float:
    """theta_{S,S'}: largest singular value of an off-diagonal block over
    disjoint index sets of sizes S and S'."""

    m = _check_square_symmetric(matrix)
    p = m.shape[0]
    if s1 < 1 or s2 < 1 or s1 + s2 > p:
        raise ValueError("need S, S' >= 1 and S + S' <= p")
    if math.comb(p, s1) * math.comb(p - s1, s2) > budget:
        raise EnumerationBudgetError(
            "too many subset pairs for exact enumeration; "
            "use restricted_orthogonality_sampled"
        )
    worst = 0.0
    for t in itertools.combinations(range(p), s1):
        rest = [j for j in range(p) if j not in t]
        for t2 in itertools.combinations(rest, s2):
            block = m[np.ix_(t, t2)]
            worst = max(worst, float(np.linalg.svd(block, compute_uv=False)[0]))
    return worst


def restricted_orthogonality_sampled(matrix, s1, s2, samples=20_000, seed=0):
    """Sampled theta over random disjoint subset pairs; returns (value, coverage)."""

    m = _check_square_symmetric(matrix)
    p = m.shape[0]
    if s1 < 1 or s2 < 1 or s1 + s2 > p:
        raise ValueError("need S, S' >= 1 and S + S' <= p")
    rng = np.random.default_rng(seed)
    worst = 0.0
    seen = set()
    for _ in range(samples):
        both = rng.choice(p, size=s1 + s2, replace=False)
        t = tuple(sorted(both[:s1].tolist()))
        t2 = tuple(sorted(both[s1:].tolist()))
        seen.add((t, t2))
        block = m[np.ix_(t, t2)]
        worst = max(worst, float(np.linalg.svd(block, compute_uv=False)[0]))
    coverage = len(seen) / (math.comb(p, s1) * math.comb(p - s1, s2))
    return worst, coverage


def uup_margin(matrix, s: int, budget: int = 1_000_000) -> float:
    """1 - delta_{2S} - theta_{S,2S}; positive margin implies a positive phi_2S."""

    m = _check_square_symmetric(matrix)
    p = m.shape[0]
    if 3 * s > p:
        raise ValueError(f"uup_margin needs 3S <= p (got S={s}, p={p})")
    return 1.0 - restricted_isometry(m, 2 * s, budget) - restricted_orthogonality(
        m, s, 2 * s, budget
    )


def sup_norm_diff(a, b) -> float:
    """Entrywise max absolute difference between two equal-shaped matrices."""

    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    return float(np.max(np.abs(a - b)))


# ---------------------------------------------------------------------------
# Population surrogate for the deterministic curvature matrix
# ---------------------------------------------------------------------------

def _replicate_seed(seed: int, rep: int) -> int:
    return int(np.random.SeedSequence(entropy=(seed, rep)).generate_state(1)[0])


def population_matrix(
    sim_config: SimConfig,
    beta=None,
    n_big: int = 4000,
    mc_reps: int = 8,
) -> PopulationMatrix:
    """Average of J_n(beta) over independent large simulated cohorts.

    A consistent Monte Carlo stand-in for the deterministic limit of the
    partial-likelihood curvature; ``stderr_sup`` is the largest entrywise
    standard error across replicates (NaN when mc_reps == 1).
    """

    if n_big < 1000:
        raise ValueError("n_big must be at least 1000")
    if mc_reps < 1:
        raise ValueError("mc_reps must be at least 1")
    beta = sim_config.beta0_full if beta is None else np.asarray(beta, dtype=float)

    mats = []
    for rep in range(mc_reps):
        cfg = replace(sim_config, n=n_big, seed=_replicate_seed(sim_config.seed, rep))
        ds = simulate_dataset(cfg)
        mats.append(evaluate(ds, beta).hessian)
    stack = np.stack(mats)
    mean = stack.mean(axis=0)
    mean = 0.5 * (mean + mean.T)
    if mc_reps > 1:
        stderr_sup = float(np.max(stack.std(axis=0, ddof=1))) / math.sqrt(mc_reps)
    else:
        stderr_sup = float("nan")
    return PopulationMatrix(matrix=mean, n_used=n_big, mc_reps=mc_reps, stderr_sup=stderr_sup)


# ---------------------------------------------------------------------------
# Full report
# ---------------------------------------------------------------------------

def compute_factor_report(
    matrix,
    support,
    qs=(1.0, 2.0, 4.0, 64.0),
    opts: FactorOptions | None = None,
    include_uup: bool = True,
    budget: int = 1_000_000,
) -> FactorReport:
    """Every factor for one matrix and support set (q=64 stands in for q=inf)."""

    m = _check_square_symmetric(matrix)
    t0 = _support(m, support)
    opts = opts or FactorOptions()
    s = len(t0)
    p = m.shape[0]

    kappa, diag_kappa = _kappa_impl(m, t0, opts)
    re_value, diag_re = _re_impl(m, t0, opts)
    f_q = {}
    diagnostics = {"kappa": diag_kappa, "re": diag_re}
    for q in qs:
        value, diag = _fq_impl(m, t0, float(q), opts)
        f_q[float(q)] = value
        diagnostics[f"f_{q:g}"] = diag
    phi = phi_2s(m, t0, opts) if 2 * s <= p else float("nan")

    delta_n = {}
    theta = {}
    if include_uup:
        for n_active in (s, 2 * s):
            if n_active <= p:
                delta_n[n_active] = restricted_isometry(m, n_active, budget)
        if 2 * s <= p:
            theta[(s, s)] = restricted_orthogonality(m, s, s, budget)
        if 3 * s <= p:
            theta[(s, 2 * s)] = restricted_orthogonality(m, s, 2 * s, budget)

    return FactorReport(
        kappa=kappa,
        f_q=f_q,
        re=re_value,
        phi_2s=phi,
        delta_n=delta_n,
        theta=theta,
        diagnostics=diagnostics,
    )


# ---------------------------------------------------------------------------
# Matrix I/O
# ---------------------------------------------------------------------------

def write_matrix_csv(matrix, path) -> None:
    np.savetxt(path, np.asarray(matrix, dtype=float), delimiter=",")


def read_matrix_csv(path) -> np.ndarray:
    m = np.loadtxt(path, delimiter=",", ndmin=2)
    return m
