"""Cox-model survival data with known sparse truth: simulation, CSV I/O, event ordering.

Event times are drawn by inverting the cumulative baseline hazard, so the
generated intensity is exactly ``Y_i(t) * alpha0(t) * exp(Z_i' beta0)``.
Censoring is an independent exponential clock (rate calibrated to hit a target
censored fraction in expectation) plus administrative censoring at ``tau``.
"""

from __future__ import annotations

import csv
import dataclasses
import json
import math
from dataclasses import dataclass

import numpy as np


class ConfigError(ValueError):
    """Invalid simulation configuration."""


class DegenerateDatasetError(RuntimeError):
    """Simulation produced a dataset with no observed events."""


class CsvParseError(ValueError):
    """CSV file violates the dataset format; carries per-line errors."""

    def __init__(self, errors):
        self.errors = list(errors)
        lines = "; ".join(f"line {ln}: {msg}" for ln, msg in self.errors)
        super().__init__(f"invalid survival CSV ({lines})")


# ---------------------------------------------------------------------------
# Baseline hazards (both admit closed-form inverse cumulative hazard)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ConstantBaseline:
    """alpha0(t) = rate."""

    rate: float

    def __post_init__(self):
        if not (self.rate > 0 and math.isfinite(self.rate)):
            raise ConfigError(
                "constant baseline rate must be positive and finite so the "
                "baseline hazard is integrable on [0, tau]"
            )

    def cumulative(self, t):
        return self.rate * np.asarray(t, dtype=float)

    def inverse_cumulative(self, y):
        return np.asarray(y, dtype=float) / self.rate

    def integral(self, tau: float) -> float:
        return self.rate * tau

    def to_json(self):
        return {"kind": "constant", "rate": self.rate}


@dataclass(frozen=True)
class WeibullBaseline:
    """alpha0(t) = (shape/scale) * (t/scale)**(shape-1); Lambda0(t) = (t/scale)**shape."""

    shape: float
    scale: float

    def __post_init__(self):
        if not (self.shape > 0 and self.scale > 0):
            raise ConfigError(
                "weibull baseline needs shape > 0 and scale > 0 so the "
                "baseline hazard is integrable on [0, tau]"
            )

    def cumulative(self, t):
        return (np.asarray(t, dtype=float) / self.scale) ** self.shape

    def inverse_cumulative(self, y):
        return self.scale * np.asarray(y, dtype=float) ** (1.0 / self.shape)

    def integral(self, tau: float) -> float:
        return (tau / self.scale) ** self.shape

    def to_json(self):
        return {"kind": "weibull", "shape": self.shape, "scale": self.scale}


def baseline_from_json(obj) -> ConstantBaseline | WeibullBaseline:
    kind = obj.get("kind")
    if kind == "constant":
        return ConstantBaseline(rate=float(obj["rate"]))
    if kind == "weibull":
        return WeibullBaseline(shape=float(obj["shape"]), scale=float(obj["scale"]))
    raise ConfigError(f"unknown baseline kind {kind!r} (expected 'constant' or 'weibull')")


# ---------------------------------------------------------------------------
# Covariate laws (all bounded: sup |Z_ij| < K1 must be satisfiable)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class UniformCovariates:
    """Z_ij i.i.d. uniform on (-halfwidth, halfwidth)."""

    halfwidth: float

    def validate(self, k1: float):
        if not (0 < self.halfwidth <= k1):
            raise ConfigError(
                f"uniform covariate halfwidth {self.halfwidth} exceeds the covariate "
                f"bound K1={k1}; covariates must satisfy sup|Z| < K1"
            )

    def sample(self, rng, n, p):
        return rng.uniform(-self.halfwidth, self.halfwidth, size=(n, p))

    def to_json(self):
        return {"kind": "uniform", "halfwidth": self.halfwidth}


@dataclass(frozen=True)
class RademacherCovariates:
    """Z_ij i.i.d. uniform on {-1, +1}; requires K1 > 1 for the strict bound."""

    def validate(self, k1: float):
        if not k1 > 1.0:
            raise ConfigError(
                f"rademacher covariates have |Z| = 1, so the covariate bound K1={k1} "
                "must exceed 1 for sup|Z| < K1 to hold"
            )

    def sample(self, rng, n, p):
        return rng.integers(0, 2, size=(n, p)).astype(float) * 2.0 - 1.0

    def to_json(self):
        return {"kind": "rademacher"}


@dataclass(frozen=True)
class ClippedGaussianCovariates:
    """Z_ij i.i.d. N(0, sigma^2) clipped to [-clip, clip]; clip must stay below K1."""

    sigma: float
    clip: float

    def validate(self, k1: float):
        if not (self.sigma > 0 and 0 < self.clip < k1):
            raise ConfigError(
                f"clipped-gaussian covariates need sigma > 0 and 0 < clip < K1={k1} "
                "so that sup|Z| < K1 holds after clipping"
            )

    def sample(self, rng, n, p):
        return np.clip(rng.normal(0.0, self.sigma, size=(n, p)), -self.clip, self.clip)

    def to_json(self):
        return {"kind": "clipped_gaussian", "sigma": self.sigma, "clip": self.clip}


def covariate_law_from_json(obj):
    kind = obj.get("kind")
    if kind == "uniform":
        return UniformCovariates(halfwidth=float(obj["halfwidth"]))
    if kind == "rademacher":
        return RademacherCovariates()
    if kind == "clipped_gaussian":
        return ClippedGaussianCovariates(sigma=float(obj["sigma"]), clip=float(obj["clip"]))
    raise ConfigError(
        f"unknown covariate law kind {kind!r} "
        "(expected 'uniform', 'rademacher' or 'clipped_gaussian')"
    )


# ---------------------------------------------------------------------------
# Configuration and dataset containers
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SimConfig:
    """Full description of one simulated cohort.

    The true coefficient vector is supported on the first ``s`` coordinates
    with values ``beta0_values``; covariates are i.i.d. and bounded by ``k1``;
    follow-up is administratively censored at ``tau``.
    """

    n: int
    p: int
    s: int
    beta0_values: tuple
    baseline: ConstantBaseline | WeibullBaseline = ConstantBaseline(1.0)
    censor_rate: float = 0.0
    covariate_law: object = UniformCovariates(1.0)
    k1: float = 1.0
    tau: float = 2.0
    seed: int = 0

    def __post_init__(self):
        if self.n < 1:
            raise ConfigError("sample size n must be at least 1")
        if self.p < 1:
            raise ConfigError("covariate dimension p must be at least 1")
        if not 1 <= self.s <= self.p:
            raise ConfigError(
                f"sparsity S={self.s} must satisfy 1 <= S <= p={self.p} "
                "(the true coefficient support cannot exceed the dimension)"
            )
        object.__setattr__(self, "beta0_values", tuple(float(v) for v in self.beta0_values))
        if len(self.beta0_values) != self.s:
            raise ConfigError(
                f"beta0_values has length {len(self.beta0_values)} but S={self.s}"
            )
        if not 0.0 <= self.censor_rate < 1.0:
            raise ConfigError("censor_rate must lie in [0, 1)")
        if not (self.k1 > 0 and math.isfinite(self.k1)):
            raise ConfigError("covariate bound K1 must be positive and finite")
        if not (self.tau > 0 and math.isfinite(self.tau)):
            raise ConfigError("study horizon tau must be positive and finite")
        if self.seed < 0:
            raise ConfigError("seed must be a nonnegative integer")
        self.covariate_law.validate(self.k1)

    @property
    def beta0(self) -> np.ndarray:
        """True coefficients on the support (length S)."""
        return np.asarray(self.beta0_values, dtype=float)

    @property
    def beta0_full(self) -> np.ndarray:
        """True coefficient vector embedded in R^p (support = first S coordinates)."""
        beta = np.zeros(self.p)
        beta[: self.s] = self.beta0
        return beta

    def to_json(self):
        return {
            "n": self.n,
            "p": self.p,
            "s": self.s,
            "beta0_values": list(self.beta0_values),
            "baseline": self.baseline.to_json(),
            "censor_rate": self.censor_rate,
            "covariate_law": self.covariate_law.to_json(),
            "k1": self.k1,
            "tau": self.tau,
            "seed": self.seed,
        }

    @classmethod
    def from_json(cls, obj) -> "SimConfig":
        if isinstance(obj, str):
            obj = json.loads(obj)
        return cls(
            n=int(obj["n"]),
            p=int(obj["p"]),
            s=int(obj["s"]),
            beta0_values=tuple(float(v) for v in obj["beta0_values"]),
            baseline=baseline_from_json(obj.get("baseline", {"kind": "constant", "rate": 1.0})),
            censor_rate=float(obj.get("censor_rate", 0.0)),
            covariate_law=covariate_law_from_json(
                obj.get("covariate_law", {"kind": "uniform", "halfwidth": 1.0})
            ),
            k1=float(obj.get("k1", 1.0)),
            tau=float(obj.get("tau", 2.0)),
            seed=int(obj.get("seed", 0)),
        )


@dataclass(frozen=True)
class Observation:
    """One subject: follow-up time X = min(T, C, tau), event indicator, covariates."""

    time: float
    status: int
    covariates: np.ndarray


@dataclass(eq=False)
class SurvivalDataset:
    """n subjects with follow-up times, event indicators and a p-column design."""

    times: np.ndarray
    status: np.ndarray
    covariates: np.ndarray
    tau: float

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.status = np.asarray(self.status, dtype=np.int8)
        self.covariates = np.asarray(self.covariates, dtype=float)
        if self.covariates.ndim != 2 or self.covariates.shape[0] != self.times.shape[0]:
            raise ValueError("covariates must be an (n, p) array matching times")
        if self.status.shape != self.times.shape:
            raise ValueError("status must have the same length as times")
        if np.any(self.times <= 0):
            raise ValueError("all follow-up times must be positive")
        if not np.all(np.isin(self.status, (0, 1))):
            raise ValueError("status entries must be 0 or 1")
        if np.any(self.times > self.tau * (1 + 1e-12)):
            raise ValueError("all times must be <= tau (administrative censoring)")

    @property
    def n(self) -> int:
        return self.times.shape[0]

    @property
    def p(self) -> int:
        return self.covariates.shape[1]

    @property
    def event_fraction(self) -> float:
        return float(np.mean(self.status))

    @property
    def observations(self):
        return [
            Observation(float(t), int(d), z)
            for t, d, z in zip(self.times, self.status, self.covariates)
        ]

    @classmethod
    def from_observations(cls, observations, tau: float) -> "SurvivalDataset":
        times = np.array([o.time for o in observations], dtype=float)
        status = np.array([o.status for o in observations], dtype=np.int8)
        covs = np.vstack([np.asarray(o.covariates, dtype=float) for o in observations])
        return cls(times=times, status=status, covariates=covs, tau=tau)

    def __eq__(self, other):
        if not isinstance(other, SurvivalDataset):
            return NotImplemented
        return (
            np.array_equal(self.times, other.times)
            and np.array_equal(self.status, other.status)
            and np.array_equal(self.covariates, other.covariates)
            and self.tau == other.tau
        )


@dataclass(frozen=True)
class EventOrder:
    """Observed events sorted by (time, subject index); flags exact time ties."""

    times: np.ndarray
    subjects: np.ndarray
    has_ties: bool

    def __len__(self):
        return self.times.shape[0]

    def pairs(self):
        return list(zip(self.times.tolist(), self.subjects.tolist()))


# ---------------------------------------------------------------------------
# Operations
# ---------------------------------------------------------------------------

def _calibrate_censor_rate(event_times: np.ndarray, tau: float, target: float) -> float:
    """Exponential censoring rate whose expected censored fraction hits ``target``.

    For a subject with latent event time T, the censored probability is 1 if
    T > tau (administrative) and 1 - exp(-rho*T) otherwise.  Monotone in rho,
    so bisection applies.  If the administrative floor already exceeds the
    target, returns 0 (best attainable).
    """

    t = np.asarray(event_times, dtype=float)
    admin = t > tau
    t_capped = np.minimum(t, tau)

    def frac_censored(rho):
        return float(np.mean(np.where(admin, 1.0, -np.expm1(-rho * t_capped))))

    if frac_censored(0.0) >= target:
        return 0.0
    hi = 1.0 / max(float(np.median(t_capped)), 1e-12)
    for _ in range(200):
        if frac_censored(hi) >= target:
            break
        hi *= 2.0
    else:
        return hi
    lo = 0.0
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        if frac_censored(mid) >= target:
            hi = mid
        else:
            lo = mid
    return hi


def simulate_dataset(config: SimConfig) -> SurvivalDataset:
    """Draw a cohort from the proportional-hazards law described by ``config``.

    Deterministic given ``config`` (including its seed).  Raises
    DegenerateDatasetError when no events are observed.
    """

    rng = np.random.default_rng(config.seed)
    z = config.covariate_law.sample(rng, config.n, config.p)
    # enforce the strict bound sup|Z| < K1 even when a law touches it
    bound = np.nextafter(config.k1, 0.0)
    np.clip(z, -bound, bound, out=z)

    eta = z[:, : config.s] @ config.beta0
    # inverse-CDF sampling: Lambda0(T) * exp(eta) ~ Exp(1)
    latent_t = config.baseline.inverse_cumulative(rng.exponential(1.0, config.n) * np.exp(-eta))

    if config.censor_rate > 0.0:
        rate = _calibrate_censor_rate(latent_t, config.tau, config.censor_rate)
        censor_t = rng.exponential(1.0 / rate, config.n) if rate > 0 else np.full(config.n, np.inf)
    else:
        censor_t = np.full(config.n, np.inf)

    cutoff = np.minimum(censor_t, config.tau)
    times = np.minimum(latent_t, cutoff)
    status = (latent_t <= cutoff).astype(np.int8)
    if int(status.sum()) == 0:
        raise DegenerateDatasetError("degenerate dataset: no events observed")
    return SurvivalDataset(times=times, status=status, covariates=z, tau=config.tau)


def event_order(dataset: SurvivalDataset) -> EventOrder:
    """Canonical evaluation order for counting-process integrals.

    Events (status == 1) sorted by time, exact ties broken by subject index;
    ``has_ties`` records whether any exact tie occurred.
    """

    idx = np.flatnonzero(dataset.status == 1)
    t = dataset.times[idx]
    order = np.lexsort((idx, t))
    t_sorted = t[order]
    has_ties = bool(t_sorted.size > 1 and np.any(np.diff(t_sorted) == 0.0))
    return EventOrder(times=t_sorted, subjects=idx[order], has_ties=has_ties)


# ---------------------------------------------------------------------------
# CSV interface: header "time,status,z1,...,zp", one row per subject
# ---------------------------------------------------------------------------

def write_csv(dataset: SurvivalDataset, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["time", "status"] + [f"z{j + 1}" for j in range(dataset.p)])
        for t, d, z in zip(dataset.times, dataset.status, dataset.covariates):
            writer.writerow([repr(float(t)), int(d)] + [repr(float(v)) for v in z])


def load_csv(path, tau: float | None = None) -> SurvivalDataset:
    """Parse a dataset, reporting every violating row with its file line number.

    ``tau`` defaults to the largest follow-up time in the file.
    """

    errors = []
    with open(path, "r", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise CsvParseError([(1, "empty file")]) from None
        header = [h.strip() for h in header]
        if len(header) < 3 or header[0] != "time" or header[1] != "status":
            raise CsvParseError([(1, "header must be time,status,z1,...,zp")])
        p = len(header) - 2
        expected_z = [f"z{j + 1}" for j in range(p)]
        if header[2:] != expected_z:
            raise CsvParseError([(1, f"covariate columns must be named {','.join(expected_z)}")])

        times, status, rows = [], [], []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != p + 2:
                errors.append((lineno, f"expected {p + 2} columns, found {len(row)}"))
                continue
            try:
                vals = [float(v) for v in row]
            except ValueError:
                errors.append((lineno, "non-numeric cell"))
                continue
            t, d, z = vals[0], vals[1], vals[2:]
            if d not in (0.0, 1.0):
                errors.append((lineno, f"status must be 0 or 1, found {row[1]!r}"))
                continue
            if t <= 0:
                errors.append((lineno, f"time must be positive, found {row[0]!r}"))
                continue
            times.append(t)
            status.append(int(d))
            rows.append(z)

    if errors:
        raise CsvParseError(errors)
    if not times:
        raise CsvParseError([(2, "no data rows")])
    times = np.asarray(times)
    if tau is None:
        tau = float(times.max())
    return SurvivalDataset(
        times=times,
        status=np.asarray(status, dtype=np.int8),
        covariates=np.asarray(rows, dtype=float),
        tau=tau,
    )
