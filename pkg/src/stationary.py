"""
═══════════════════════════════════════════════════════════════════════════════
STATIONARY BROWNIAN QUEUES IN SERIES
═══════════════════════════════════════════════════════════════════════════════

Increment-stationary last-passage percolation with parameter lambda:

    Y_0(t)  = lambda t - B_0(t)
    q_m     = Q<(Y_{m-1}, B_m)          (queue length at station m)
    Y_m     = D<(Y_{m-1}, B_m)          (departures, again drift lambda)
    W_{m-1} = R<(Y_{m-1}, B_m)          (a fresh field of Brownian motions)

Reverse-time sups are truncated at the left edge of the window; the
truncated prefix widens from level to level and is reported per level.

Checks:
    - Exp(lambda) marginals of q_m and drift lambda of Y_m
    - Burke-type independence of staircase-separated blocks
    - the sandwich of W-environment LPP differences around -Y_0(s,t) and q_1(t)
═══════════════════════════════════════════════════════════════════════════════
"""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass
from pathlib import Path
from types import MappingProxyType
from typing import Dict, List, Mapping, Optional, Sequence, Union

import numpy as np
import pandas as pd

from src.busemann import terminal_point
from src.config import (
    CORRELATION_K,
    DISTANCE_CORRELATION_K,
    DISTANCE_CORRELATION_MAX_SAMPLES,
    STACK_MANIFEST_NAME,
)
from src.distlib import (
    CheckReport,
    TestReport,
    correlation_check,
    distance_correlation,
    ks_report,
    ks_threshold,
    normal_law_cdf,
    two_sample_ks,
    two_sample_threshold,
)
from src.envgen import (
    BrownianField,
    GridFunction,
    GridSpec,
    grid_manifest,
    write_grid_function,
    write_manifest,
)
from src.errors import ConfigurationError, DomainError, WindowError
from src.lpp import terminal_table
from src.queueops import rqueue_maps

logger = logging.getLogger(__name__)

NEGATIVE_CONTROL = "Y0_past"


# ═══════════════════════════════════════════════════════════════════════════════
# STACK
# ═══════════════════════════════════════════════════════════════════════════════

@dataclass(frozen=True, eq=False)
class StationaryStack:
    """
    Y_0..Y_n, q_1..q_n and W_0..W_{n-1} built on one field.

    truncated[m] flags the prefix of grid points where q_m's sup reached the
    left edge of the window.
    """

    lam: float
    bfield: BrownianField
    Y: Mapping[int, GridFunction]
    q: Mapping[int, GridFunction]
    W: Mapping[int, GridFunction]
    truncated: Mapping[int, np.ndarray]

    def __post_init__(self):
        for name in ("Y", "q", "W", "truncated"):
            object.__setattr__(self, name, MappingProxyType(dict(getattr(self, name))))

    @property
    def n_levels(self) -> int:
        return len(self.q)

    @property
    def spec(self) -> GridSpec:
        return self.bfield.spec

    def dirty_until(self, high: Optional[int] = None) -> int:
        """Last flagged index over levels 1..high (-1 when none)."""
        high = self.n_levels if high is None else high
        last = -1
        for m in range(1, high + 1):
            hits = np.flatnonzero(self.truncated[m])
            if len(hits):
                last = max(last, int(hits[-1]))
        return last

    def w_field(self) -> BrownianField:
        """{W_m} as an environment on levels 0..n-1."""
        return BrownianField(self.spec, dict(self.W), seed=self.bfield.seed, replica=self.bfield.replica)


def build_stationary(bfield: BrownianField, lam: float, n_levels: int) -> StationaryStack:
    """
    Run the stationary queue recursion through stations 1..n_levels.

    Args:
        bfield: Environment carrying levels 0..n_levels
        lam: Drift of the arrival process Y_0, lambda > 0
        n_levels: Number of stations

    Returns:
        StationaryStack with per-level truncation flags
    """
    if lam <= 0:
        raise ConfigurationError(f"lambda must be positive, got {lam}")
    if n_levels < 1:
        raise ConfigurationError(f"need at least one station, got {n_levels}")
    try:
        bfield.require_levels(0, n_levels)
    except DomainError as exc:
        raise ConfigurationError(f"stationary stack with {n_levels} stations: {exc}") from None

    spec = bfield.spec
    Y = {0: GridFunction(spec, lam * spec.times - bfield.values(0))}
    q, W, flags = {}, {}, {}
    dirty = None
    for m in range(1, n_levels + 1):
        result, D, R = rqueue_maps(Y[m - 1], bfield[m], dirty)
        q[m], Y[m], W[m - 1] = result.queue, D, R
        flags[m] = result.truncated
        dirty = result.last_truncated
        if dirty >= spec.zero_index:
            # D shifts by Q<(0); once that is flagged every later level is
            dirty = spec.last_index

    logger.debug("stationary stack lambda=%g with %d stations", lam, n_levels)
    return StationaryStack(lam, bfield, Y, q, W, flags)


# ═══════════════════════════════════════════════════════════════════════════════
# BURKE PROPERTY
# ═══════════════════════════════════════════════════════════════════════════════

def _check_staircase(times: Sequence[float]) -> None:
    if any(a < b for a, b in zip(times, times[1:])):
        raise ConfigurationError(f"Burke times must satisfy t_n <= ... <= t_1, got {list(times)}")


def burke_blocks(
    stack: StationaryStack, times: Sequence[float], lag: float, negative_control: bool = False
) -> Dict[str, float]:
    """
    One replica's scalar summaries of the mutually independent blocks.

    times[0] = t_1 >= times[1] = t_2 >= ...; each process block is summarized
    by one increment of length `lag` on its side of the staircase. With
    `negative_control`, Y_0(t_1 - lag, t_1) is added; it feeds q_1(t_1) and
    must show up as correlated.
    """
    _check_staircase(times)
    n = len(times)
    if n > stack.n_levels:
        raise ConfigurationError(f"{n} Burke times need {n} stations, stack has {stack.n_levels}")
    if lag <= 0:
        raise ConfigurationError(f"lag must be positive, got {lag}")
    spec = stack.spec
    B = stack.bfield
    t = [spec.time_at(spec.index_of(x)) for x in times]
    if spec.index_of(t[-1] - lag) <= stack.dirty_until(n):
        raise WindowError(f"block left of t_n = {t[-1]} reaches the truncated prefix")

    row = {
        "W0_past": stack.W[0].increment(t[0] - lag, t[0]),
        "q1": stack.q[1](t[0]),
        "Y0_future": stack.Y[0].increment(t[0], t[0] + lag),
    }
    for r in range(1, n):
        row[f"W{r}_past"] = stack.W[r].increment(t[r] - lag, t[r])
        row[f"q{r + 1}"] = stack.q[r + 1](t[r])
        if t[r] < t[r - 1]:
            row[f"Y{r}_between"] = stack.Y[r].increment(t[r], t[r - 1])
        row[f"B{r}_future"] = B[r].increment(t[r - 1], t[r - 1] + lag)
    row[f"Y{n}_past"] = stack.Y[n].increment(t[-1] - lag, t[-1])
    row[f"B{n}_future"] = B[n].increment(t[-1], t[-1] + lag)
    if negative_control:
        row[NEGATIVE_CONTROL] = stack.Y[0].increment(t[0] - lag, t[0])
    return row


def burke_check(frame: pd.DataFrame, k: float = CORRELATION_K) -> CheckReport:
    """
    Pairwise Pearson correlations of the block columns over replicas.

    Every pair must satisfy |rho| < k / sqrt(replicas). A distance-correlation
    spot check runs on (q1, Y0_future). A negative-control column, if
    present, is kept out of the verdict; details["control_detected"] says
    whether its correlation with q1 was caught.
    """
    columns = [c for c in frame.columns if c not in (NEGATIVE_CONTROL, "replica")]
    report = CheckReport("burke_independence")
    n = len(frame)
    report.details["threshold"] = k / np.sqrt(n)
    report.details["replicas"] = n
    for a, b in itertools.combinations(columns, 2):
        test = correlation_check(frame[a], frame[b], k, statistic=f"corr({a},{b})")
        report.record(test.passed, test.value, pair=(a, b), rho=test.value)

    sub = frame[["q1", "Y0_future"]].iloc[:DISTANCE_CORRELATION_MAX_SAMPLES]
    dcor = distance_correlation(sub["q1"], sub["Y0_future"])
    dcor_threshold = DISTANCE_CORRELATION_K / np.sqrt(len(sub))
    report.record(dcor < dcor_threshold, dcor, pair=("q1", "Y0_future"), statistic="distance_correlation")
    report.details["distance_correlation"] = dcor
    report.details["distance_correlation_threshold"] = dcor_threshold

    if NEGATIVE_CONTROL in frame:
        control = correlation_check(frame[NEGATIVE_CONTROL], frame["q1"], k)
        report.details["control_rho"] = control.value
        report.details["control_detected"] = not control.passed
    return report


# ═══════════════════════════════════════════════════════════════════════════════
# QUEUEING FIXED POINT
# ═══════════════════════════════════════════════════════════════════════════════

def queue_fixed_point_check(y0_incr, ym_incr, lam: float, lag: float) -> List[TestReport]:
    """Departures match arrivals in law: Y_m(0, lag) ~ N(lambda lag, lag) and ~ Y_0(0, lag)."""
    n, m = len(ym_incr), len(y0_incr)
    return [
        ks_report(ym_incr, normal_law_cdf(lam * lag, lag), ks_threshold(n), statistic="ks_departures_normal"),
        two_sample_ks(y0_incr, ym_incr, two_sample_threshold(m, n), statistic="ks_departures_vs_arrivals"),
    ]


# ═══════════════════════════════════════════════════════════════════════════════
# SANDWICH
# ═══════════════════════════════════════════════════════════════════════════════

def sandwich_check(
    bfield: BrownianField,
    lam: float,
    delta_hat: float,
    gamma_hat: float,
    s: float,
    t: float,
    n: int,
) -> Dict[str, object]:
    """
    One replica of the finite-n sandwich in the W environment.

        L_{(0,t),(n,n d)} - L_{(0,s),(n,n d)} <= -Y_0(s,t) <= same with g
        L_{(0,t),(n,n d)} - L_{(1,t),(n,n d)} <= q_1(t)    <= same with g

    for d < lambda^-2 < g. The limits hold as n -> infinity; at finite n this
    reports which of the four inequalities already hold.

    Args:
        bfield: Environment carrying levels 0..n+1
        lam: Stationary parameter
        delta_hat, gamma_hat: Directions on either side of lambda^-2
        s, t: Times with s < t
        n: Terminal level

    Returns:
        Row with the four LPP differences, the two stationary targets and the
        bracket flags h_bracketed, v_bracketed
    """
    if not delta_hat < lam ** -2 < gamma_hat:
        raise ConfigurationError(
            f"sandwich needs delta_hat < lambda^-2 < gamma_hat, got {delta_hat}, {lam ** -2}, {gamma_hat}"
        )
    if not s < t:
        raise ConfigurationError(f"sandwich needs s < t, got s={s}, t={t}")
    spec = bfield.spec
    for direction in (delta_hat, gamma_hat):
        if n * direction > spec.t_max or n * direction < t:
            raise ConfigurationError(f"ray (n, n*{direction}) with n={n} leaves the window or ends before t={t}")

    stack = build_stationary(bfield, lam, n + 1)
    w = stack.w_field()
    js, jt = spec.index_of(s), spec.index_of(t)

    row = {"truncated": js <= stack.dirty_until()}
    for label, direction in (("delta", delta_hat), ("gamma", gamma_hat)):
        G = terminal_table(w, terminal_point(spec, direction, n), 0)
        row[f"h_{label}"] = float(G[0, jt] - G[0, js])
        row[f"v_{label}"] = float(G[0, jt] - G[1, jt])
    row["h_target"] = -stack.Y[0].increment(s, t)
    row["v_target"] = stack.q[1](t)
    row["h_bracketed"] = row["h_delta"] <= row["h_target"] <= row["h_gamma"]
    row["v_bracketed"] = row["v_delta"] <= row["v_target"] <= row["v_gamma"]
    return row


def sandwich_fraction(rows: pd.DataFrame) -> Dict[str, float]:
    """Bracketing frequencies over untruncated replicas."""
    clean = rows[~rows["truncated"].astype(bool)]
    if clean.empty:
        return {"h_fraction": np.nan, "v_fraction": np.nan, "both_fraction": np.nan, "replicas": 0}
    both = clean["h_bracketed"].astype(bool) & clean["v_bracketed"].astype(bool)
    return {
        "h_fraction": float(clean["h_bracketed"].mean()),
        "v_fraction": float(clean["v_bracketed"].mean()),
        "both_fraction": float(both.mean()),
        "replicas": len(clean),
    }


# ═══════════════════════════════════════════════════════════════════════════════
# PERSISTENCE
# ═══════════════════════════════════════════════════════════════════════════════

def write_stationary(stack: StationaryStack, directory: Union[str, Path]) -> Path:
    """`Y_<m>.csv`, `q_<m>.csv`, `W_<m>.csv` plus `stack.manifest`."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for m, Y in stack.Y.items():
        write_grid_function(Y, directory / f"Y_{m}.csv")
    for m, q in stack.q.items():
        write_grid_function(q, directory / f"q_{m}.csv")
    for m, W in stack.W.items():
        write_grid_function(W, directory / f"W_{m}.csv")
    write_manifest(
        directory / STACK_MANIFEST_NAME,
        {
            **grid_manifest(stack.spec),
            "lambda": repr(stack.lam),
            "sampler": "stationary",
            "seed": stack.bfield.seed,
            "replica": stack.bfield.replica,
            "stations": stack.n_levels,
        },
    )
    return directory
