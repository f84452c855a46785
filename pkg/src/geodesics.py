"""
═══════════════════════════════════════════════════════════════════════════════
SEMI-INFINITE AND DUAL GEODESICS
═══════════════════════════════════════════════════════════════════════════════

Northeast geodesics in direction theta are built level by level from a
Busemann stack:

    tau_r = argmax_{s >= tau_{r-1}} { B_r(s) - h_{r+1}(s) }

with the leftmost (LEFT) or rightmost (RIGHT) grid maximizer. Southwest dual
geodesics descend through the zero set of the vertical increments:

    RIGHT  tau*_{r-1} = last grid zero of v_r at or before tau*_r
    LEFT   tau*_{r-1} = first point u <= tau*_r with h_r(u, tau*_r) = X_r(u, tau*_r)

On the grid the dual descent lands on the last grid point at or before the
continuum one, so dual jump times and the dual energy are exact up to one
grid cell; see dual_energy_check.
═══════════════════════════════════════════════════════════════════════════════
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Iterable, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
import statsmodels.api as sm

from src.busemann import LIMIT, BusemannStack, busemann_increment, dual_field
from src.config import MIN_DIRECTION_LEVELS, SUM_ORDER_TOL
from src.distlib import CheckReport
from src.envgen import BrownianField, GridFunction, GridSpec, sample_field
from src.errors import ConfigurationError, DomainError, InsufficientDataError
from src.lpp import (
    LEFT,
    RIGHT,
    PassagePath,
    Point,
    backtrack,
    check_side,
    energy,
    last_passage,
    pick_argmax,
    point_to_line,
)
from src.queueops import right_running_max

logger = logging.getLogger(__name__)


# ═══════════════════════════════════════════════════════════════════════════════
# TYPES
# ═══════════════════════════════════════════════════════════════════════════════

@dataclass(frozen=True)
class SemiInfGeodesic:
    """
    Northeast geodesic from (m, t), cut at the top of its stack.

    jump_times[i] is tau_{m-1+i}; truncated[i] flags tau_{m+i}, set once an
    argmax falls in the stack's untrusted region or on the window edge.
    """

    start: Point
    theta: float
    side: str
    jump_times: Tuple[float, ...]
    truncated: Tuple[bool, ...]

    @property
    def start_level(self) -> int:
        return self.start[0]

    @property
    def top_level(self) -> int:
        return self.start_level + len(self.jump_times) - 2

    def tau(self, level: int) -> float:
        i = level - self.start_level + 1
        if not 0 <= i < len(self.jump_times):
            raise DomainError(f"level {level} outside geodesic levels {self.start_level - 1}..{self.top_level}")
        return self.jump_times[i]

    def is_truncated(self, level: int) -> bool:
        if level < self.start_level:
            return False
        return self.truncated[level - self.start_level]

    def clean_top(self) -> int:
        """Highest level whose jump time is not flagged (start level - 1 when none)."""
        top = self.start_level - 1
        for r in range(self.start_level, self.top_level + 1):
            if self.is_truncated(r):
                break
            top = r
        return top

    def path(self, top: Optional[int] = None) -> PassagePath:
        top = self.top_level if top is None else top
        return PassagePath(self.start_level, self.jump_times[: top - self.start_level + 2])

    def to_frame(self) -> pd.DataFrame:
        levels = np.arange(self.start_level - 1, self.top_level + 1)
        return pd.DataFrame({
            "level": levels,
            "jump_time": self.jump_times,
            "truncated": (False, *self.truncated),
        })


@dataclass(frozen=True)
class DualGeodesic:
    """
    Southwest dual geodesic from (m, t): jump_times[i] is tau*_{m-i}, so
    jump_times[0] = t and the sequence is nonincreasing. truncated[i] flags
    tau*_{m-1-i}.
    """

    start: Point
    theta: float
    side: str
    jump_times: Tuple[float, ...]
    truncated: Tuple[bool, ...]

    @property
    def start_level(self) -> int:
        return self.start[0]

    @property
    def bottom_level(self) -> int:
        return self.start_level - len(self.jump_times) + 1

    def tau(self, level: int) -> float:
        i = self.start_level - level
        if not 0 <= i < len(self.jump_times):
            raise DomainError(f"level {level} outside dual geodesic levels {self.bottom_level}..{self.start_level}")
        return self.jump_times[i]

    def is_truncated(self, level: int) -> bool:
        if level >= self.start_level:
            return False
        return self.truncated[self.start_level - 1 - level]

    def to_frame(self) -> pd.DataFrame:
        levels = np.arange(self.start_level, self.bottom_level - 1, -1)
        return pd.DataFrame({
            "level": levels,
            "jump_time": self.jump_times,
            "truncated": (False, *self.truncated),
        })


# ═══════════════════════════════════════════════════════════════════════════════
# CONSTRUCTION
# ═══════════════════════════════════════════════════════════════════════════════

def busemann_geodesic(
    stack: BusemannStack, start: Point, side: str = LEFT, top_level: Optional[int] = None
) -> SemiInfGeodesic:
    """Sequential grid argmax of B_r - h_{r+1} from (m, t) up to top_level."""
    check_side(side)
    m, t = start
    spec = stack.spec
    j = spec.index_of(t)
    top = stack.max_level - 1 if top_level is None else int(top_level)
    if top < m:
        raise DomainError(f"stack levels {stack.levels} cannot carry a geodesic from level {m}")
    for r in range(m + 1, top + 2):
        stack[r]
    bfield = stack.bfield

    times = [spec.time_at(j)]
    flags = []
    cut = False
    for r in range(m, top + 1):
        upper = stack[r + 1]
        f = bfield.values(r) - upper.h.values
        M, _ = right_running_max(f)
        k = j + pick_argmax(f[j:] == M[j], side)
        cut = cut or k >= upper.first_truncated or k == spec.last_index
        times.append(spec.time_at(k))
        flags.append(cut)
        j = k
    return SemiInfGeodesic((m, spec.time_at(spec.index_of(t))), stack.theta, side, tuple(times), tuple(flags))


def dual_geodesic(
    stack: BusemannStack, start: Point, side: str = RIGHT, bottom_level: Optional[int] = None
) -> DualGeodesic:
    """
    Descend from (m, t) to bottom_level through the zero sets of v_m, v_{m-1}, ...

    The jump off level r is read from the records of B_{r-1} - h_r against its
    right running max: the last record at or before t (RIGHT), or the left end
    of the running-max level through t (LEFT). Those records are exactly
    the grid points where v_r = Q(h_r, B_{r-1}) vanishes, so this walk and the
    argmax form of the dual geodesic pick the same grid times.
    """
    check_side(side)
    m, t = start
    spec = stack.spec
    j = spec.index_of(t)
    bottom = stack.min_level if bottom_level is None else int(bottom_level)
    if bottom > m:
        raise DomainError(f"bottom level {bottom} above start level {m}")
    bfield = stack.bfield

    times = [spec.time_at(j)]
    flags = []
    cut = False
    for r in range(m, bottom, -1):
        sl = stack[r]
        f = bfield.values(r - 1) - sl.h.values
        M, _ = right_running_max(f)
        records = f == M
        if side == RIGHT:
            hits = np.flatnonzero(records[: j + 1])
            k = int(hits[-1]) if len(hits) else -1
        else:
            # M is nonincreasing; first index of its level set through j
            first = int(np.searchsorted(-M, -M[j], side="left"))
            k = first if records[first] else first - 1
        cut = cut or k <= 0 or j >= sl.first_truncated
        k = max(k, 0)
        times.append(spec.time_at(k))
        flags.append(cut)
        j = k
    return DualGeodesic((m, times[0]), stack.theta, side, tuple(times), tuple(flags))


# ═══════════════════════════════════════════════════════════════════════════════
# DIRECTION & MONOTONICITY
# ═══════════════════════════════════════════════════════════════════════════════

def direction_fit(g: SemiInfGeodesic, min_levels: int = MIN_DIRECTION_LEVELS):
    """OLS fit of tau_r against r over the untruncated levels."""
    top = g.clean_top()
    levels = np.arange(g.start_level, top + 1)
    if len(levels) < min_levels:
        raise InsufficientDataError(f"direction needs {min_levels} untruncated levels, got {len(levels)}")
    taus = np.array([g.tau(r) for r in levels])
    return sm.OLS(taus, sm.add_constant(levels.astype(float))).fit()


def geodesic_direction(g: SemiInfGeodesic, min_levels: int = MIN_DIRECTION_LEVELS) -> float:
    """Least-squares slope of tau_n against n; estimates theta."""
    return float(direction_fit(g, min_levels).params[1])


def _ordered(report: CheckReport, lower, upper, levels: Iterable[int], **context) -> None:
    for r in levels:
        if lower.is_truncated(r) or upper.is_truncated(r):
            report.truncated += 1
            continue
        a, b = lower.tau(r), upper.tau(r)
        report.record(a <= b, max(a - b, 0.0), level=r, **context)


def geodesic_monotonicity_check(
    stack: BusemannStack,
    starts: Sequence[Point],
    stack_high: Optional[BusemannStack] = None,
    top_level: Optional[int] = None,
) -> CheckReport:
    """
    Coordinatewise ordering of jump times:
        - LEFT <= RIGHT from every start
        - tau_{(m,s),r} <= tau_{(m,t),r} for s < t on a level, per side
        - tau^gamma_r <= tau^theta_r when `stack_high` (direction theta) is given;
          both stacks must come from the finite-n estimator on the same field
    """
    if stack_high is not None:
        if stack.sampler != LIMIT or stack_high.sampler != LIMIT:
            raise ConfigurationError("direction monotonicity needs stacks from the finite-n estimator")
        low_field, high_field = stack.bfield, stack_high.bfield
        if (low_field.seed, low_field.replica, stack.spec) != (high_field.seed, high_field.replica, stack_high.spec):
            raise ConfigurationError("direction monotonicity needs both stacks on one field and window")
        if stack.theta > stack_high.theta:
            raise ConfigurationError("stack_high must carry the larger direction")

    report = CheckReport("geodesic_monotonicity")
    built = {}
    for side in (LEFT, RIGHT):
        for x in starts:
            built[side, x] = busemann_geodesic(stack, x, side, top_level)

    for x in starts:
        g_left, g_right = built[LEFT, x], built[RIGHT, x]
        _ordered(report, g_left, g_right, range(x[0], g_left.top_level + 1), start=x, kind="sides")

    for side in (LEFT, RIGHT):
        by_level = {}
        for x in starts:
            by_level.setdefault(x[0], []).append(x)
        for level_starts in by_level.values():
            level_starts.sort(key=lambda p: p[1])
            for a, b in zip(level_starts, level_starts[1:]):
                ga, gb = built[side, a], built[side, b]
                _ordered(report, ga, gb, range(a[0], ga.top_level + 1), start=(a, b), side=side, kind="start")

        if stack_high is not None:
            for x in starts:
                g_low = built[side, x]
                g_high = busemann_geodesic(stack_high, x, side, top_level)
                top = min(g_low.top_level, g_high.top_level)
                _ordered(report, g_low, g_high, range(x[0], top + 1), start=x, side=side, kind="direction")
    return report


# ═══════════════════════════════════════════════════════════════════════════════
# GEODESIC IDENTITIES
# ═══════════════════════════════════════════════════════════════════════════════

def geodesic_energy_check(stack: BusemannStack, g: SemiInfGeodesic, tol: float = SUM_ORDER_TOL) -> CheckReport:
    """
    On the levels m..n covered by g:
        - energy from (m,t) to (n, tau_n) equals the Busemann increment
        - v_{r+1}(tau_r) = 0 at every jump
        - point_to_line with boundary h_{n+1} has value B((m,t),(n+1,0)) and
          returns g's own jump times
        - last_passage to (n, tau_n) equals that energy and backtrack on g's
          side returns g
    """
    report = CheckReport("geodesic_identities")
    bfield = stack.bfield
    spec = stack.spec
    m, t = g.start
    n = g.top_level
    path = g.path()

    e = energy(bfield, path)
    b = busemann_increment(stack, g.start, (n, g.tau(n)))
    report.record(abs(e - b) <= tol, abs(e - b), identity="energy = Busemann")

    for r in range(m, n + 1):
        v_at_jump = stack.v(r + 1).values[spec.index_of(g.tau(r))]
        report.record(abs(v_at_jump) <= tol, abs(v_at_jump), identity="v vanishes at jump", level=r)

    if n + 1 in stack:
        value, line_path = point_to_line(bfield, g.start, stack.h(n + 1), n, g.side)
        target = busemann_increment(stack, g.start, (n + 1, 0.0))
        report.record(abs(value - target) <= tol, abs(value - target), identity="point-to-line value")
        report.record(line_path.jump_times == path.jump_times, 0.0, identity="point-to-line path")

    lp, table = last_passage(bfield, g.start, (n, g.tau(n)))
    report.record(abs(lp - e) <= tol, abs(lp - e), identity="geodesic energy = last passage")
    finite = backtrack(table, (n, g.tau(n)), g.side)
    report.record(finite.jump_times == path.jump_times, 0.0, identity="finite geodesic on same side")
    return report


def dual_energy_check(stack: BusemannStack, d: DualGeodesic, tol: float = SUM_ORDER_TOL) -> CheckReport:
    """
    Dual path energy in the X environment against B((b, tau*_b), (m, t)).

    On the grid the energy falls short of the Busemann increment by
    sum_r [M_r(tau*_{r-1}) - M_r(tau*_r)] >= 0, M_r the running max of
    B_{r-1} - h_r; it vanishes when every descent lands on the exact level.
    """
    report = CheckReport("dual_identities")
    spec = stack.spec
    bfield = stack.bfield
    m, t = d.start
    b = d.bottom_level
    if b == m:
        return report

    e = 0.0
    gap = 0.0
    for r in range(m, b, -1):
        hi, lo = spec.index_of(d.tau(r)), spec.index_of(d.tau(r - 1))
        x = stack.x_dual(r).values
        e += x[hi] - x[lo]
        f = bfield.values(r - 1) - stack.h(r).values
        M, _ = right_running_max(f)
        gap += M[lo] - M[hi]
        if d.is_truncated(r - 1):
            report.truncated += 1
        else:
            v_at = stack.v(r).values[lo]
            report.record(abs(v_at) <= tol, abs(v_at), identity="v vanishes at dual jump", level=r)

    target = busemann_increment(stack, (b, d.tau(b)), d.start)
    shortfall = target - e
    if not d.is_truncated(b):
        ok = -tol <= shortfall <= gap + tol
        report.record(ok, abs(shortfall - gap), identity="dual energy", shortfall=shortfall, gap=gap)
    report.details["dual_energy"] = e
    report.details["busemann"] = target
    report.details["cell_gap"] = gap

    xfield = dual_field(stack)
    if b + 1 <= m:
        lp, _ = last_passage(xfield, (b + 1, d.tau(b)), d.start)
        report.record(lp >= e - tol, max(e - lp, 0.0), identity="dual path below X last passage")
        report.details["x_last_passage"] = lp
    return report


# ═══════════════════════════════════════════════════════════════════════════════
# CROSSING, COALESCENCE, NEAR TIES
# ═══════════════════════════════════════════════════════════════════════════════

def crossing_check(g: SemiInfGeodesic, d: DualGeodesic) -> CheckReport:
    """
    Geodesic from (m, s) against dual geodesic from (m+1, t), s <= t, comparing
    a = tau_{(m,s),m} with b = tau*_{(m+1,t),m}.

        g RIGHT, d LEFT:  a < t  implies a < b;    t <= a  implies b <= s
        g LEFT,  d RIGHT: a <= t implies a <= b;   t < a   implies b < s

    The strict form of the first implication can fail by exactly one grid cell
    (b == a) when no grid point of the dual level set lies beyond a; those are
    counted in details["grid_limited"] and the weak form a <= b is asserted.
    """
    pairs = {(RIGHT, LEFT), (LEFT, RIGHT)}
    if (g.side, d.side) not in pairs:
        raise ConfigurationError(f"crossing check pairs RIGHT with LEFT*, got {g.side}/{d.side}")
    if g.theta != d.theta:
        raise ConfigurationError("crossing check needs a common direction")
    m, s = g.start
    if d.start_level != m + 1:
        raise DomainError(f"dual geodesic must start on level {m + 1}, got {d.start_level}")
    t = d.start[1]
    if s > t:
        raise DomainError(f"crossing check needs s <= t, got {s} > {t}")

    report = CheckReport("geodesic_crossing")
    report.details["grid_limited"] = 0
    if d.bottom_level > m:
        return report
    if g.is_truncated(m) or d.is_truncated(m):
        report.truncated += 1
        return report

    a, b = g.tau(m), d.tau(m)
    if g.side == RIGHT:
        if a < t:
            report.record(a <= b, max(a - b, 0.0), part="i", a=a, b=b)
            if a == b:
                report.details["grid_limited"] += 1
        else:
            report.record(b <= s, max(b - s, 0.0), part="ii", a=a, b=b)
    else:
        if a <= t:
            report.record(a <= b, max(a - b, 0.0), part="iii", a=a, b=b)
        else:
            report.record(b < s, max(b - s, 0.0), part="iv", a=a, b=b)
    return report


def crossing_sweep(stack: BusemannStack, m: int, s: float, t: float) -> CheckReport:
    """All four crossing implications at (m, s) and (m+1, t)."""
    report = CheckReport("geodesic_crossing", details={"grid_limited": 0})
    for g_side, d_side in ((RIGHT, LEFT), (LEFT, RIGHT)):
        g = busemann_geodesic(stack, (m, s), g_side, top_level=m)
        d = dual_geodesic(stack, (m + 1, t), d_side, bottom_level=m)
        sub = crossing_check(g, d)
        limited = report.details["grid_limited"] + sub.details["grid_limited"]
        report = report.merge(sub)
        report.details["grid_limited"] = limited
    return report


def coalescence_experiment(
    stack: BusemannStack, start1: Point, start2: Point, side: str = LEFT
) -> Tuple[bool, Optional[int]]:
    """
    First level r at which the two geodesics share tau_{r-1} (and therefore
    everything above it). (False, None) when they have not met below the
    first truncated level.
    """
    g1 = busemann_geodesic(stack, start1, side)
    g2 = busemann_geodesic(stack, start2, side)
    low = max(g1.start_level, g2.start_level) - 1
    top = min(g1.top_level, g2.top_level)
    for r in range(low, top + 1):
        if g1.is_truncated(r) or g2.is_truncated(r):
            break
        if g1.tau(r) == g2.tau(r):
            return True, r + 1
    return False, None


def near_tie_scan(f: GridFunction, epsilon: float) -> np.ndarray:
    """
    Grid times of epsilon-approximate non-unique maximizers.

    A point j qualifies when f_j is a right record (f_j = max_{k >= j} f_k) and
    some later value comes within epsilon of it; both j and the first later
    point attaining max_{k > j} f_k are returned.
    """
    if epsilon < 0:
        raise ConfigurationError(f"epsilon must be nonnegative, got {epsilon}")
    v = f.values
    spec = f.spec
    if v[-1] >= v[spec.zero_index]:
        logger.warning("near_tie_scan: f does not decrease towards t_max; late records may be window artifacts")
    M, _ = right_running_max(v)
    later = np.append(M[1:], -np.inf)
    qualifies = (v == M) & (later >= v - epsilon)

    hits = set()
    for j in np.flatnonzero(qualifies):
        partner = j + 1 + int(np.argmax(v[j + 1:] == later[j]))
        hits.update((int(j), partner))
    return spec.times[sorted(hits)]


# ═══════════════════════════════════════════════════════════════════════════════
# MIDPOINT PROBLEM
# ═══════════════════════════════════════════════════════════════════════════════

def _check_rays(spec: GridSpec, theta: float, eta: float, n_max: int) -> None:
    if n_max * theta > spec.t_max or -n_max * eta < spec.t_min:
        raise ConfigurationError(
            f"rays (n, n*{theta}) and (-n, -n*{eta}) leave the window [{spec.t_min}, {spec.t_max}] before n={n_max}"
        )


def passes_near(path: PassagePath, point: Point, step: float) -> bool:
    """Whether the level-m segment of the path comes within one grid step of t."""
    m, t = point
    if not path.start_level <= m <= path.end_level:
        return False
    a, b = path.segment(m)
    return a - step <= t <= b + step


def midpoint_hits(
    bfield: BrownianField,
    theta: float,
    eta: float,
    point: Point,
    n_values: Sequence[int],
    side: str = LEFT,
) -> List[dict]:
    """For each n, whether the geodesic from (-n, -n eta) to (n, n theta) passes near `point`."""
    spec = bfield.spec
    _check_rays(spec, theta, eta, max(n_values))
    rows = []
    for n in n_values:
        if n == 0:
            path = PassagePath(0, (0.0, 0.0))
        else:
            a = spec.time_at(spec.nearest_index(-n * eta))
            b = spec.time_at(spec.nearest_index(n * theta))
            _, table = last_passage(bfield, (-n, a), (n, b))
            path = backtrack(table, (n, b), side)
        rows.append({"n": int(n), "hit": passes_near(path, point, spec.step)})
    return rows


def midpoint_curve(rows: pd.DataFrame) -> pd.DataFrame:
    """Hit probability per n from per-replica rows."""
    return rows.groupby("n", as_index=False)["hit"].mean().rename(columns={"hit": "probability"})


def midpoint_experiment(
    spec: GridSpec,
    seed: int,
    theta: float,
    eta: float,
    point: Point,
    n_values: Sequence[int],
    replicas: int,
) -> pd.DataFrame:
    """Sequential decay curve over `replicas` independent fields."""
    _check_rays(spec, theta, eta, max(n_values))
    n_max = max(n_values)
    rows = []
    for replica in range(replicas):
        bfield = sample_field(spec, range(-n_max, n_max + 1), seed, replica=replica)
        for row in midpoint_hits(bfield, theta, eta, point, n_values):
            rows.append({"replica": replica, **row})
    return midpoint_curve(pd.DataFrame(rows))
