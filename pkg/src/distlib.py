"""
═══════════════════════════════════════════════════════════════════════════════
CLOSED-FORM LAWS & STATISTICAL TEST KIT
═══════════════════════════════════════════════════════════════════════════════

Exact laws for functionals of sqrt(2)*B(s) - lambda*s (B a standard Brownian
motion) and the report types every check in the lab returns.

    exp_sup_cdf      sup over s >= 0            ~ Exp(lambda)
    increment_cdf_D  sup over [0, inf) minus sup over [t, inf)
    argmax_tail      P(argmax > t)

The Monte Carlo oracles sample the same sqrt(2)-scaled process on a grid.
═══════════════════════════════════════════════════════════════════════════════
"""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field
from typing import Any, Callable, Dict, Optional, Tuple

import numpy as np
from scipy import special, stats
from scipy.spatial.distance import pdist, squareform
from statsmodels.distributions.empirical_distribution import ECDF

from src.config import (
    CDF_CLAMP_TOL,
    CORRELATION_K,
    GRID_MAX_SHIFT,
    KS_CRITICAL,
    KS_CROSSCHECK_THRESHOLD,
    KS_THRESHOLD,
    MIN_SAMPLES,
    MOMENT_K_SIGMA,
)
from src.envgen import GridSpec
from src.errors import DomainError, InsufficientDataError

logger = logging.getLogger(__name__)


# ═══════════════════════════════════════════════════════════════════════════════
# REPORT TYPES
# ═══════════════════════════════════════════════════════════════════════════════

@dataclass
class TestReport:
    """Outcome of one statistical comparison; passes iff value <= threshold."""

    __test__ = False  # keep pytest from collecting this class

    statistic: str
    value: float
    threshold: float
    sample_size: int
    truncation_excluded: int = 0

    @property
    def passed(self) -> bool:
        return bool(self.value <= self.threshold)

    def to_row(self) -> Dict[str, Any]:
        return {**asdict(self), "passed": self.passed}


@dataclass
class CheckReport:
    """
    Outcome of a deterministic identity or inequality sweep.

    `truncated` counts evaluations excluded because an optimizer touched the
    window boundary; they never count as violations.
    """

    name: str
    checked: int = 0
    violations: int = 0
    truncated: int = 0
    max_deviation: float = 0.0
    details: Dict[str, Any] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.violations == 0

    def merge(self, other: "CheckReport") -> "CheckReport":
        merged = CheckReport(
            name=self.name,
            checked=self.checked + other.checked,
            violations=self.violations + other.violations,
            truncated=self.truncated + other.truncated,
            max_deviation=max(self.max_deviation, other.max_deviation),
            details={**self.details, **other.details},
        )
        if self.violations and "first_violation" in self.details:
            merged.details["first_violation"] = self.details["first_violation"]
        return merged

    def record(self, ok: bool, deviation: float = 0.0, **context) -> None:
        self.checked += 1
        self.max_deviation = max(self.max_deviation, float(deviation))
        if not ok:
            self.violations += 1
            self.details.setdefault("first_violation", context)

    def to_row(self) -> Dict[str, Any]:
        return {
            "statistic": self.name,
            "value": self.max_deviation,
            "threshold": np.nan,
            "sample_size": self.checked,
            "truncation_excluded": self.truncated,
            "violations": self.violations,
            "passed": self.passed,
        }


# ═══════════════════════════════════════════════════════════════════════════════
# NORMAL CDF
# ═══════════════════════════════════════════════════════════════════════════════

def normal_cdf(x):
    return special.ndtr(x)


def log_normal_cdf(x):
    return special.log_ndtr(x)


def _require_positive(name: str, value: float) -> None:
    if not value > 0:
        raise DomainError(f"{name} must be positive, got {value}")


def _clamp_probability(p, label: str):
    p = np.asarray(p, dtype=float)
    low, high = p.min(initial=0.0), p.max(initial=1.0)
    excess = max(-low, high - 1.0)
    if excess > 0:
        if excess < CDF_CLAMP_TOL:
            logger.debug("%s: clamped roundoff excess %.3e", label, excess)
        else:
            logger.warning("%s: probability left [0, 1] by %.3e; clamping", label, excess)
        p = np.clip(p, 0.0, 1.0)
    return p


# ═══════════════════════════════════════════════════════════════════════════════
# CLOSED-FORM LAWS
# ═══════════════════════════════════════════════════════════════════════════════

def exp_sup_cdf(lam: float, x):
    """CDF of sup_{s >= 0} {sqrt(2) B(s) - lam s}: 1 - exp(-lam x) for x >= 0."""
    _require_positive("lambda", lam)
    x = np.asarray(x, dtype=float)
    out = np.where(x >= 0, -np.expm1(-lam * np.maximum(x, 0.0)), 0.0)
    return float(out) if out.ndim == 0 else out


def increment_cdf_D(lam: float, t: float, z):
    """
    P(D(t) <= z) where D(t) = sup_{s>=0} - sup_{s>=t} of sqrt(2) B(s) - lam s.

    The e^{lam z} Phi(.) product is evaluated as exp(lam z + log Phi(.)) and
    the Gaussian term as exp(-(z - lam t)^2 / (4t)), so large z cannot overflow.
    Negative z is accepted by vectorized callers and maps to 0.
    """
    _require_positive("lambda", lam)
    _require_positive("t", t)
    z = np.asarray(z, dtype=float)
    if z.ndim == 0 and z < 0:
        raise DomainError(f"z must be nonnegative, got {float(z)}")

    zz = np.maximum(z, 0.0)
    root = np.sqrt(2.0 * t)
    a = (zz + lam * t) / root
    head = normal_cdf((zz - lam * t) / root)
    tail = (1.0 + lam * zz + lam * lam * t) * np.exp(lam * zz + log_normal_cdf(-a))
    gauss = lam * np.sqrt(t / np.pi) * np.exp(-((zz - lam * t) ** 2) / (4.0 * t))
    p = _clamp_probability(head + tail - gauss, "increment_cdf_D")
    p = np.where(z < 0, 0.0, p)
    return float(p) if p.ndim == 0 else p


def argmax_tail(lam: float, t):
    """P(T > t) for T the maximizer of sqrt(2) B(s) - lam s over s >= 0."""
    _require_positive("lambda", lam)
    t = np.asarray(t, dtype=float)
    if (t < 0).any():
        raise DomainError("t must be nonnegative")
    half = lam * np.sqrt(t / 2.0)
    p = (2.0 + lam * lam * t) * normal_cdf(-half) - lam * np.sqrt(t / np.pi) * np.exp(-lam * lam * t / 4.0)
    p = _clamp_probability(p, "argmax_tail")
    return float(p) if p.ndim == 0 else p


def increment_survival_zero(lam: float, t: float) -> float:
    """P(D(t) = 0), the atom of the increment law."""
    return argmax_tail(lam, t)


# ═══════════════════════════════════════════════════════════════════════════════
# MONTE CARLO ORACLES
# ═══════════════════════════════════════════════════════════════════════════════

def drifted_path(lam: float, spec_right: GridSpec, rng: np.random.Generator) -> np.ndarray:
    """sqrt(2) B(s) - lam s on the nonnegative grid times of spec_right."""
    k0 = spec_right.zero_index
    n_right = spec_right.n_points - 1 - k0
    steps = rng.normal(-lam * spec_right.step, np.sqrt(2.0 * spec_right.step), size=n_right)
    path = np.empty(n_right + 1)
    path[0] = 0.0
    np.cumsum(steps, out=path[1:])
    return path


def sup_argmax_sample(lam: float, spec: GridSpec, rng: np.random.Generator) -> Tuple[float, float, bool]:
    """
    Grid sup and argmax time of sqrt(2) B(s) - lam s over s in [0, t_max].

    Returns:
        (sup value, argmax time, truncated) where truncated marks a maximizer
        on the last grid point
    """
    path = drifted_path(lam, spec, rng)
    j = int(np.argmax(path))
    return float(path[j]), j * spec.step, j == len(path) - 1


def grid_max_shift(step: float, variance_rate: float = 2.0) -> float:
    """Expected undershoot of a grid maximum against the continuous one (add it back to grid sups)."""
    return float(GRID_MAX_SHIFT * np.sqrt(variance_rate * step))


def increment_D_sample(lam: float, t: float, spec: GridSpec, rng: np.random.Generator) -> Tuple[float, bool]:
    """Grid sample of D(t); t must be a grid time inside [0, t_max)."""
    path = drifted_path(lam, spec, rng)
    jt = spec.index_of(t) - spec.zero_index
    total = path.max()
    later = path[jt:].max()
    return float(total - later), bool(later == path[-1])


# ═══════════════════════════════════════════════════════════════════════════════
# STATISTICS
# ═══════════════════════════════════════════════════════════════════════════════

def _as_samples(samples, minimum: int = MIN_SAMPLES) -> np.ndarray:
    x = np.asarray(samples, dtype=float).ravel()
    x = x[np.isfinite(x)]
    if len(x) < minimum:
        raise InsufficientDataError(f"need at least {minimum} samples, got {len(x)}")
    return x


def ks_distance(samples, cdf: Callable) -> float:
    """
    One-sample Kolmogorov-Smirnov statistic sup |F_n - F|.

    Tied samples (an atom of the law, e.g. D(t) = 0) are compared through the
    left limits of both CDFs, which scipy's continuous-law kstest does not do.
    """
    x = np.sort(_as_samples(samples))
    values, counts = np.unique(x, return_counts=True)
    if len(values) == len(x):
        return float(stats.kstest(x, cdf).statistic)

    n = len(x)
    ecdf_right = np.cumsum(counts) / n
    ecdf_left = ecdf_right - counts / n
    model_right = np.asarray(cdf(values), dtype=float)
    model_left = np.asarray(cdf(np.nextafter(values, -np.inf)), dtype=float)
    return float(max(np.abs(ecdf_right - model_right).max(), np.abs(ecdf_left - model_left).max()))


def ks_report(samples, cdf: Callable, threshold: float, statistic: str = "ks", excluded: int = 0) -> TestReport:
    x = _as_samples(samples)
    return TestReport(statistic, ks_distance(x, cdf), threshold, len(x), excluded)


def two_sample_ks(a, b, threshold: float, statistic: str = "ks_2samp") -> TestReport:
    a, b = _as_samples(a), _as_samples(b)
    value = float(stats.ks_2samp(a, b).statistic)
    return TestReport(statistic, value, threshold, min(len(a), len(b)))


def moment_check(samples, mean: float, var: float, k_sigma: float = MOMENT_K_SIGMA,
                 statistic: str = "mean", excluded: int = 0) -> TestReport:
    """Passes iff |sample mean - mean| < k_sigma * sqrt(var / n)."""
    x = _as_samples(samples)
    threshold = k_sigma * np.sqrt(var / len(x))
    return TestReport(statistic, float(abs(x.mean() - mean)), float(threshold), len(x), excluded)


def variance_check(samples, var: float, k_sigma: float = MOMENT_K_SIGMA,
                   statistic: str = "variance", kurtosis: float = 3.0, excluded: int = 0) -> TestReport:
    """Sample variance against var, with the standard error of a variance estimate."""
    x = _as_samples(samples)
    n = len(x)
    se = var * np.sqrt((kurtosis - 1.0) / n)
    return TestReport(statistic, float(abs(x.var(ddof=1) - var)), float(k_sigma * se), n, excluded)


def correlation_check(a, b, k: float = CORRELATION_K, statistic: str = "correlation") -> TestReport:
    """Passes iff |pearson rho| < k / sqrt(n)."""
    a, b = _as_samples(a), _as_samples(b)
    if len(a) != len(b):
        raise DomainError("correlation needs paired samples")
    rho = float(stats.pearsonr(a, b).statistic)
    return TestReport(statistic, abs(rho), k / np.sqrt(len(a)), len(a))


def distance_correlation(a, b) -> float:
    """Sample distance correlation of two univariate samples (0 iff independent in the limit)."""
    a = _as_samples(a, minimum=2).reshape(-1, 1)
    b = _as_samples(b, minimum=2).reshape(-1, 1)
    if len(a) != len(b):
        raise DomainError("distance correlation needs paired samples")

    def centred(v):
        d = squareform(pdist(v))
        return d - d.mean(axis=0) - d.mean(axis=1)[:, None] + d.mean()

    A, B = centred(a), centred(b)
    dcov2 = (A * B).mean()
    denom = np.sqrt((A * A).mean() * (B * B).mean())
    if denom <= 0:
        return 0.0
    return float(np.sqrt(max(dcov2, 0.0) / denom))


def exponential_cdf(rate: float) -> Callable:
    return lambda x: exp_sup_cdf(rate, x)


def normal_law_cdf(mean: float, var: float) -> Callable:
    sd = np.sqrt(var)
    return lambda x: normal_cdf((np.asarray(x, dtype=float) - mean) / sd)


# ═══════════════════════════════════════════════════════════════════════════════
# SAMPLE-SIZE AWARE THRESHOLDS
# ═══════════════════════════════════════════════════════════════════════════════

def ks_threshold(n: int, floor: float = KS_THRESHOLD) -> float:
    """The configured KS floor or the 1% critical value at n samples, whichever is larger."""
    return float(max(floor, KS_CRITICAL / np.sqrt(n)))


def two_sample_threshold(n: int, m: Optional[int] = None, floor: float = KS_CROSSCHECK_THRESHOLD) -> float:
    m = n if m is None else m
    return float(max(floor, KS_CRITICAL * np.sqrt((n + m) / (n * m))))


def tail_report(samples, survival: Callable, points, threshold: Optional[float] = None,
                statistic: str = "tail", excluded: int = 0) -> TestReport:
    """
    max |P_n(X > t) - P(X > t)| over the given points.

    Compares the law only where grid effects are negligible, e.g. an argmax
    away from 0.
    """
    x = _as_samples(samples)
    points = np.asarray(points, dtype=float)
    empirical = 1.0 - ECDF(x)(points)
    value = float(np.abs(empirical - np.asarray(survival(points), dtype=float)).max())
    threshold = ks_threshold(len(x)) if threshold is None else threshold
    return TestReport(statistic, value, threshold, len(x), excluded)
