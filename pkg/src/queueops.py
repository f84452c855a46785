"""
═══════════════════════════════════════════════════════════════════════════════
BROWNIAN QUEUE OPERATORS
═══════════════════════════════════════════════════════════════════════════════

Queue length, departure and unused-service maps of a (arrivals Z, service B)
pair, their reverse-time analogues, and the deterministic identities tying
them together.

    Q(Z,B)(t)  = sup_{s >= t} {B(t,s) - Z(t,s)}
    D(Z,B)(t)  = Z(t) + Q(0) - Q(t)
    R(Z,B)(t)  = B(t) + Q(t) - Q(0)

    Q<(Y,C)(t) = sup_{s <= t} {C(s,t) - Y(s,t)}
    D<(Y,C)(t) = Y(t) + Q<(t) - Q<(0)
    R<(Y,C)(t) = C(t) + Q<(0) - Q<(t)

Suprema are taken over grid points and truncated at the window edge. Each
sup reports a per-point truncation flag, set when its maximizer sits on the
boundary index.

Grid caveat:
    With f = B - Z and M its running max from the right, Q = M - f. Reversing
    (D, R) needs, for every t, an earlier point where f sits exactly on the
    level M(t). In continuous time such a point always exists; on the grid, f
    usually steps over that level inside one cell. The reverse maps then
    undershoot by at most the height of that crossing, so inversion is exact
    at running-max records and otherwise bounded by the crossing gap.
    invert_check asserts exactly that bound.
═══════════════════════════════════════════════════════════════════════════════
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from src.config import DRIFT_PROXY_SIGMAS, INTERIOR_FRACTION, INVERSION_TOL, SUM_ORDER_TOL
from src.distlib import CheckReport
from src.envgen import GridFunction, GridSpec, reflect
from src.errors import DomainError

logger = logging.getLogger(__name__)


# ═══════════════════════════════════════════════════════════════════════════════
# RUNNING SUPREMA
# ═══════════════════════════════════════════════════════════════════════════════

@dataclass(frozen=True, eq=False)
class QueueResult:
    """
    Queue profile plus per-point truncation flags.

    Flags from a forward scan form a suffix of the grid, flags from a reverse
    scan a prefix.
    """

    queue: GridFunction
    truncated: np.ndarray

    def truncated_in(self, lo: int, hi: int) -> int:
        return int(self.truncated[lo:hi + 1].sum())

    @property
    def first_truncated(self) -> int:
        """First flagged index (n_points when none)."""
        hits = np.flatnonzero(self.truncated)
        return int(hits[0]) if len(hits) else len(self.truncated)

    @property
    def last_truncated(self) -> int:
        """Last flagged index (-1 when none)."""
        hits = np.flatnonzero(self.truncated)
        return int(hits[-1]) if len(hits) else -1


def right_running_max(f: np.ndarray, dirty_from: Optional[int] = None) -> Tuple[np.ndarray, np.ndarray]:
    """
    M[j] = max_{k >= j} f[k] plus truncation flags.

    f is trusted on indices below `dirty_from` (default: the last index). M[j]
    is flagged when its maximum is attained in the untrusted suffix, i.e.
    M[j] <= M[dirty_from].
    """
    M = np.maximum.accumulate(f[::-1])[::-1]
    c = len(f) - 1 if dirty_from is None else min(max(int(dirty_from), 0), len(f) - 1)
    return M, M <= M[c]


def left_running_max(g: np.ndarray, dirty_until: Optional[int] = None) -> Tuple[np.ndarray, np.ndarray]:
    """G[j] = max_{k <= j} g[k]; flagged when attained at or before `dirty_until` (default 0)."""
    G = np.maximum.accumulate(g)
    c = 0 if dirty_until is None else min(max(int(dirty_until), 0), len(g) - 1)
    return G, G <= G[c]


def _pair_spec(a: GridFunction, b: GridFunction) -> GridSpec:
    if a.spec != b.spec:
        raise DomainError(f"queue inputs live on different grids: {a.spec} vs {b.spec}")
    return a.spec


def drift_proxy_ok(Z: GridFunction, B: GridFunction, sigmas: float = DRIFT_PROXY_SIGMAS) -> bool:
    """
    Finite-window stand-in for limsup (B - Z) = -inf: B - Z must fall from 0 by
    at least `sigmas` standard deviations of its own increments accumulated
    over [0, t_max].
    """
    spec = _pair_spec(Z, B)
    f = B.values - Z.values
    steps = np.diff(f)
    horizon = spec.n_points - 1 - spec.zero_index
    spread = steps.std(ddof=1) * np.sqrt(max(horizon, 1))
    ok = bool(f[-1] - f[spec.zero_index] <= -sigmas * spread)
    if not ok:
        logger.warning(
            "drift proxy failed: (B - Z) falls by %.3g over [0, t_max], needs %.3g",
            f[spec.zero_index] - f[-1], sigmas * spread,
        )
    return ok


# ═══════════════════════════════════════════════════════════════════════════════
# FORWARD MAPS
# ═══════════════════════════════════════════════════════════════════════════════

def queue_Q_with_flags(Z: GridFunction, B: GridFunction, dirty_from: Optional[int] = None) -> QueueResult:
    spec = _pair_spec(Z, B)
    f = B.values - Z.values
    M, flags = right_running_max(f, dirty_from)
    return QueueResult(GridFunction(spec, M - f), flags)


def queue_Q(Z: GridFunction, B: GridFunction) -> GridFunction:
    return queue_Q_with_flags(Z, B).queue


def queue_D(Z: GridFunction, B: GridFunction, Q: Optional[GridFunction] = None) -> GridFunction:
    q = (Q if Q is not None else queue_Q(Z, B)).values
    k0 = Z.spec.zero_index
    return GridFunction(Z.spec, Z.values + (q[k0] - q))


def queue_R(Z: GridFunction, B: GridFunction, Q: Optional[GridFunction] = None) -> GridFunction:
    q = (Q if Q is not None else queue_Q(Z, B)).values
    k0 = B.spec.zero_index
    return GridFunction(B.spec, B.values + (q - q[k0]))


def queue_maps(
    Z: GridFunction, B: GridFunction, dirty_from: Optional[int] = None
) -> Tuple[QueueResult, GridFunction, GridFunction]:
    """(Q with flags, D, R) from a single running-max scan."""
    result = queue_Q_with_flags(Z, B, dirty_from)
    return result, queue_D(Z, B, result.queue), queue_R(Z, B, result.queue)


# ═══════════════════════════════════════════════════════════════════════════════
# REVERSE-TIME MAPS
# ═══════════════════════════════════════════════════════════════════════════════

def rqueue_Q_with_flags(Y: GridFunction, C: GridFunction, dirty_until: Optional[int] = None) -> QueueResult:
    spec = _pair_spec(Y, C)
    g = Y.values - C.values
    G, flags = left_running_max(g, dirty_until)
    return QueueResult(GridFunction(spec, G - g), flags)


def rqueue_Q(Y: GridFunction, C: GridFunction) -> GridFunction:
    return rqueue_Q_with_flags(Y, C).queue


def rqueue_D(Y: GridFunction, C: GridFunction, Q: Optional[GridFunction] = None) -> GridFunction:
    q = (Q if Q is not None else rqueue_Q(Y, C)).values
    k0 = Y.spec.zero_index
    return GridFunction(Y.spec, Y.values + (q - q[k0]))


def rqueue_R(Y: GridFunction, C: GridFunction, Q: Optional[GridFunction] = None) -> GridFunction:
    q = (Q if Q is not None else rqueue_Q(Y, C)).values
    k0 = C.spec.zero_index
    return GridFunction(C.spec, C.values + (q[k0] - q))


def rqueue_maps(
    Y: GridFunction, C: GridFunction, dirty_until: Optional[int] = None
) -> Tuple[QueueResult, GridFunction, GridFunction]:
    result = rqueue_Q_with_flags(Y, C, dirty_until)
    return result, rqueue_D(Y, C, result.queue), rqueue_R(Y, C, result.queue)


# ═══════════════════════════════════════════════════════════════════════════════
# BRUTE-FORCE ORACLES (tests only)
# ═══════════════════════════════════════════════════════════════════════════════

def queue_Q_bruteforce(Z: GridFunction, B: GridFunction) -> np.ndarray:
    """O(n^2) double loop over sup_{s >= t} {B(t,s) - Z(t,s)}."""
    z, b = Z.values, B.values
    n = len(z)
    out = np.empty(n)
    for j in range(n):
        out[j] = max((b[k] - b[j]) - (z[k] - z[j]) for k in range(j, n))
    return out


def rqueue_Q_bruteforce(Y: GridFunction, C: GridFunction) -> np.ndarray:
    """O(n^2) double loop over sup_{s <= t} {C(s,t) - Y(s,t)}."""
    y, c = Y.values, C.values
    n = len(y)
    out = np.empty(n)
    for j in range(n):
        out[j] = max((c[j] - c[k]) - (y[j] - y[k]) for k in range(0, j + 1))
    return out


# ═══════════════════════════════════════════════════════════════════════════════
# IDENTITY CHECKS
# ═══════════════════════════════════════════════════════════════════════════════

def crossing_gap(Z: GridFunction, B: GridFunction) -> np.ndarray:
    """
    Per-point bound on Q(Z,B) - Q<(D,R).

    For each t, s0 is the last running-max record of f = B - Z at or before t;
    the bound is the distance from M(t) to the nearer endpoint of the cell
    [s0, s0 + 1] in which f steps across M(t). Zero at records. Infinite when
    no record precedes t inside the window.
    """
    f = B.values - Z.values
    M, _ = right_running_max(f)
    n = len(f)
    is_record = f >= M
    idx = np.where(is_record, np.arange(n), -1)
    last_record = np.maximum.accumulate(idx)

    gap = np.full(n, np.inf)
    has = last_record >= 0
    s0 = last_record[has]
    nxt = np.minimum(s0 + 1, n - 1)
    upper = f[s0] - M[has]
    lower = M[has] - f[nxt]
    gap[has] = np.where(s0 == np.arange(n)[has], 0.0, np.minimum(upper, lower))
    return gap


def invert_check(
    Z: GridFunction,
    B: GridFunction,
    interior: Optional[Tuple[int, int]] = None,
    tol: float = INVERSION_TOL,
    dirty_from: Optional[int] = None,
    departures: Optional[GridFunction] = None,
    unused: Optional[GridFunction] = None,
) -> CheckReport:
    """
    Reconstruct (Z, B) from (Y, C) = (D(Z,B), R(Z,B)) through the reverse maps.

    On the interior window, asserts at every grid point:
        - 0 <= Q(Z,B) - Q<(Y,C) <= crossing gap (exact where the gap is 0)
        - |Z - D<(Y,C)| and |B - R<(Y,C)| within the gap at t plus the gap at 0
    Points whose forward or reverse sup touches the window edge are counted
    as truncated and skipped; `dirty_from` marks an untrusted suffix of the
    inputs, as in right_running_max. `departures` and `unused` replace the
    computed (Y, C) when reversing stored lines.
    """
    spec = _pair_spec(Z, B)
    lo, hi = interior if interior is not None else spec.interior(INTERIOR_FRACTION)
    fwd, Y, C = queue_maps(Z, B, dirty_from)
    Y = Y if departures is None else departures
    C = C if unused is None else unused
    rev, Z_back, B_back = rqueue_maps(Y, C)

    gap = crossing_gap(Z, B)
    k0 = spec.zero_index
    report = CheckReport("queue_inversion")
    q_dev = fwd.queue.values - rev.queue.values
    z_dev = np.abs(Z.values - Z_back.values)
    b_dev = np.abs(B.values - B_back.values)
    exact_points = 0
    exact_dev = 0.0

    for j in range(lo, hi + 1):
        if fwd.truncated[j] or rev.truncated[j] or fwd.truncated[k0] or rev.truncated[k0]:
            report.truncated += 1
            continue
        bound = gap[j] + tol
        shift_bound = gap[j] + gap[k0] + tol
        ok = (-tol <= q_dev[j] <= bound) and z_dev[j] <= shift_bound and b_dev[j] <= shift_bound
        deviation = max(abs(q_dev[j]), z_dev[j], b_dev[j])
        if gap[j] == 0.0 and gap[k0] == 0.0:
            exact_points += 1
            exact_dev = max(exact_dev, float(deviation))
        report.record(ok, deviation, index=j, t=spec.time_at(j), q_dev=float(q_dev[j]), gap=float(gap[j]))

    report.details["exact_points"] = exact_points
    report.details["exact_max_deviation"] = exact_dev
    return report


def conservation_check(Z: GridFunction, B: GridFunction, tol: float = SUM_ORDER_TOL) -> CheckReport:
    """D + R = Z + B and D< + R< = Y + C pointwise."""
    _, D, R = queue_maps(Z, B)
    _, Dr, Rr = rqueue_maps(Z, B)
    dev_fwd = np.abs(D.values + R.values - Z.values - B.values)
    dev_rev = np.abs(Dr.values + Rr.values - Z.values - B.values)
    report = CheckReport("queue_conservation")
    report.record(bool(dev_fwd.max() <= tol), float(dev_fwd.max()), direction="forward")
    report.record(bool(dev_rev.max() <= tol), float(dev_rev.max()), direction="reverse")
    return report


def reflection_check(Z: GridFunction, B: GridFunction, tol: float = SUM_ORDER_TOL) -> CheckReport:
    """
    Q(Z,B)(-t) = Q<(Z~,B~)(t), -D(Z,B)(-t) = D<(Z~,B~)(t), -R(Z,B)(-t) = R<(Z~,B~)(t),
    with f~(t) = -f(-t). The Q identity is checked bit-exactly.
    """
    Zr, Br = reflect(Z), reflect(B)
    fwd, D, R = queue_maps(Z, B)
    rev, Dr, Rr = rqueue_maps(Zr, Br)

    report = CheckReport("queue_reflection")
    q_dev = np.abs(fwd.queue.values[::-1] - rev.queue.values).max()
    d_dev = np.abs(-D.values[::-1] - Dr.values).max()
    r_dev = np.abs(-R.values[::-1] - Rr.values).max()
    report.record(bool(q_dev == 0.0), float(q_dev), identity="Q")
    report.record(bool(d_dev <= tol), float(d_dev), identity="D")
    report.record(bool(r_dev <= tol), float(r_dev), identity="R")
    return report


def pitman_check(f: GridFunction, t: Optional[float] = None) -> CheckReport:
    """
    inf_{s >= t} (2F(s) - f(s)) = F(t), F the running max of f from t_min.

    Always asserted: inf >= F(t). Asserted bit-exactly: equality at every t
    where f returns to the level F(t) at some s >= t with F(s) = F(t). The
    remaining points (f steps over F(t) between grid points, or never
    reaches it before t_max) are counted as truncated.
    """
    v = f.values
    F = np.maximum.accumulate(v)
    W = 2.0 * F - v
    inf_right = np.minimum.accumulate(W[::-1])[::-1]

    # attained[j]: some s >= j has f(s) == F(s) == F(j)
    on_level = v == F
    n = len(v)
    attained = np.zeros(n, dtype=bool)
    seen_levels = set()
    for j in range(n - 1, -1, -1):
        if on_level[j]:
            seen_levels.add(F[j])
        attained[j] = F[j] in seen_levels

    indices = range(n) if t is None else [f.spec.index_of(t)]
    report = CheckReport("pitman")
    for j in indices:
        dev = inf_right[j] - F[j]
        if dev < 0:
            report.record(False, abs(dev), index=j, reason="inf below running max")
        elif attained[j]:
            report.record(dev == 0.0, dev, index=j, reason="level attained but identity inexact")
        else:
            report.truncated += 1
    return report
