"""
═══════════════════════════════════════════════════════════════════════════════
BROWNIAN LAST-PASSAGE PERCOLATION ON THE GRID
═══════════════════════════════════════════════════════════════════════════════

Up-right paths from (m, s) to (n, t) are encoded by their jump times
s = tau_{m-1} <= tau_m <= ... <= tau_n = t; the path spends [tau_{r-1}, tau_r]
on level r and collects B_r over that interval.

    L_{(m,s),(n,t)} = max over grid jump times of  sum_r B_r(tau_{r-1}, tau_r)

Level by level the maximum reduces to a running max:

    L_m(t_j) = B_m(s, t_j)
    L_r(t_j) = B_r(t_j) + max_{s <= t_k <= t_j} (L_{r-1}(t_k) - B_r(t_k))

so a full table over (levels x grid) costs O(levels * n_points) and serves
every terminal point at once.
═══════════════════════════════════════════════════════════════════════════════
"""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from src.config import CSV_FLOAT_FORMAT, SUM_ORDER_TOL
from src.distlib import CheckReport
from src.envgen import BrownianField, GridFunction, GridSpec
from src.errors import ConfigurationError, DomainError

logger = logging.getLogger(__name__)

LEFT = "left"
RIGHT = "right"
SIDES = (LEFT, RIGHT)

Point = Tuple[int, float]


def check_side(side: str) -> str:
    if side not in SIDES:
        raise ConfigurationError(f"side must be one of {SIDES}, got {side!r}")
    return side


def pick_argmax(mask: np.ndarray, side: str) -> int:
    """Leftmost or rightmost True index of a nonempty mask."""
    hits = np.flatnonzero(mask)
    return int(hits[0] if side == LEFT else hits[-1])


# ═══════════════════════════════════════════════════════════════════════════════
# PATHS
# ═══════════════════════════════════════════════════════════════════════════════

@dataclass(frozen=True)
class PassagePath:
    """
    Up-right path from (start_level, jump_times[0]).

    jump_times[i] is tau_{start_level - 1 + i}; the path ends on level
    start_level + len(jump_times) - 2 at time jump_times[-1].
    """

    start_level: int
    jump_times: Tuple[float, ...]

    def __post_init__(self):
        times = tuple(float(t) for t in self.jump_times)
        if len(times) < 2:
            raise DomainError("a path needs its start time and at least one jump time")
        if any(b < a for a, b in zip(times, times[1:])):
            raise DomainError(f"jump times must be nondecreasing: {times}")
        object.__setattr__(self, "jump_times", times)

    @property
    def end_level(self) -> int:
        return self.start_level + len(self.jump_times) - 2

    @property
    def start(self) -> Point:
        return self.start_level, self.jump_times[0]

    @property
    def end(self) -> Point:
        return self.end_level, self.jump_times[-1]

    def tau(self, level: int) -> float:
        """tau_level, for start_level - 1 <= level <= end_level."""
        i = level - self.start_level + 1
        if not 0 <= i < len(self.jump_times):
            raise DomainError(f"level {level} outside the path's range")
        return self.jump_times[i]

    def segment(self, level: int) -> Tuple[float, float]:
        """Horizontal segment [tau_{level-1}, tau_level] occupied on `level`."""
        return self.tau(level - 1), self.tau(level)

    def restrict(self, low: int, high: int) -> "PassagePath":
        """Sub-path from (low, tau_{low-1}) to (high, tau_high)."""
        i, k = low - self.start_level, high - self.start_level + 1
        if not (0 <= i < k < len(self.jump_times)):
            raise DomainError(f"cannot restrict path on levels {self.start_level}..{self.end_level} to {low}..{high}")
        return PassagePath(low, self.jump_times[i:k + 1])

    def indices(self, spec: GridSpec) -> np.ndarray:
        return np.array([spec.index_of(t) for t in self.jump_times])

    def to_frame(self) -> pd.DataFrame:
        levels = np.arange(self.start_level - 1, self.end_level + 1)
        return pd.DataFrame({"level": levels, "jump_time": self.jump_times})


def path_from_indices(spec: GridSpec, start_level: int, indices: Sequence[int]) -> PassagePath:
    return PassagePath(start_level, tuple(spec.time_at(int(j)) for j in indices))


def write_path(path: PassagePath, filepath: Union[str, Path]) -> Path:
    filepath = Path(filepath)
    filepath.parent.mkdir(parents=True, exist_ok=True)
    path.to_frame().to_csv(filepath, index=False, float_format=CSV_FLOAT_FORMAT, lineterminator="\n")
    return filepath


def read_path(filepath: Union[str, Path]) -> PassagePath:
    df = pd.read_csv(filepath)
    if list(df.columns[:2]) != ["level", "jump_time"]:
        raise DomainError(f"{filepath}: expected header level,jump_time")
    return PassagePath(int(df["level"].iloc[0]) + 1, tuple(df["jump_time"]))


# ═══════════════════════════════════════════════════════════════════════════════
# ENERGY
# ═══════════════════════════════════════════════════════════════════════════════

def energy(bfield: BrownianField, path: PassagePath) -> float:
    """Sum over levels r of B_r(tau_{r-1}, tau_r)."""
    idx = path.indices(bfield.spec)
    total = 0.0
    for i, r in enumerate(range(path.start_level, path.end_level + 1)):
        line = bfield.values(r)
        total += line[idx[i + 1]] - line[idx[i]]
    return float(total)


# ═══════════════════════════════════════════════════════════════════════════════
# LAST-PASSAGE TABLE
# ═══════════════════════════════════════════════════════════════════════════════

@dataclass(frozen=True, eq=False)
class LppTable:
    """
    Last-passage values from a fixed start to every (level, grid time) right of it.

    values[r - start_level, j] is L_{(start_level, s),(r, t_j)}; entries left of
    the start index are -inf.
    """

    bfield: BrownianField
    start_level: int
    start_index: int
    values: np.ndarray

    @property
    def top_level(self) -> int:
        return self.start_level + self.values.shape[0] - 1

    @property
    def spec(self) -> GridSpec:
        return self.bfield.spec

    def row(self, level: int) -> np.ndarray:
        if not self.start_level <= level <= self.top_level:
            raise DomainError(f"level {level} not covered by table {self.start_level}..{self.top_level}")
        return self.values[level - self.start_level]

    def value(self, level: int, t: float) -> float:
        j = self.spec.index_of(t)
        if j < self.start_index:
            raise DomainError(f"terminal time {t} precedes the start time")
        return float(self.row(level)[j])


def lpp_table(bfield: BrownianField, start: Point, top_level: int) -> LppTable:
    """DP table from `start` up to `top_level`, every terminal time."""
    m, s = start
    if top_level < m:
        raise DomainError(f"top level {top_level} below start level {m}")
    bfield.require_levels(m, top_level)
    spec = bfield.spec
    k = spec.index_of(s)

    values = np.full((top_level - m + 1, spec.n_points), -np.inf)
    base = bfield.values(m)
    values[0, k:] = base[k:] - base[k]
    for i, r in enumerate(range(m + 1, top_level + 1), start=1):
        line = bfield.values(r)
        values[i, k:] = line[k:] + np.maximum.accumulate(values[i - 1, k:] - line[k:])
    return LppTable(bfield, m, k, values)


def last_passage(bfield: BrownianField, start: Point, end: Point) -> Tuple[float, LppTable]:
    (m, s), (n, t) = start, end
    if n < m or t < s:
        raise DomainError(f"start {start} is not below-left of end {end}")
    table = lpp_table(bfield, start, n)
    return table.value(n, t), table


def terminal_table(bfield: BrownianField, end: Point, bottom_level: int) -> np.ndarray:
    """
    Last-passage values from every (level, grid time) to a fixed end point.

    Row i holds L_{(bottom_level + i, t_j),(n, t)} for every j; entries right of
    the end time are -inf. Computed by the mirror image of the forward
    recursion, scanning right to left.
    """
    n, t = end
    if n < bottom_level:
        raise DomainError(f"end level {n} below bottom level {bottom_level}")
    bfield.require_levels(bottom_level, n)
    k = bfield.spec.index_of(t)

    values = np.full((n - bottom_level + 1, bfield.spec.n_points), -np.inf)
    top = bfield.values(n)
    values[-1, :k + 1] = top[k] - top[:k + 1]
    for i in range(n - bottom_level - 1, -1, -1):
        line = bfield.values(bottom_level + i)
        gain = (values[i + 1, :k + 1] + line[:k + 1])[::-1]
        values[i, :k + 1] = np.maximum.accumulate(gain)[::-1] - line[:k + 1]
    return values


def backtrack(table: LppTable, end: Point, side: str = LEFT) -> PassagePath:
    """
    Leftmost (side=LEFT) or rightmost geodesic from the table's start to `end`.

    Ties are resolved at exact float equality only.
    """
    check_side(side)
    n, t = end
    spec = table.spec
    j = spec.index_of(t)
    if j < table.start_index:
        raise DomainError(f"terminal time {t} precedes the start time")
    table.row(n)

    k0 = table.start_index
    indices = [j]
    for r in range(n, table.start_level, -1):
        line = table.bfield.values(r)
        window = table.row(r - 1)[k0:j + 1] - line[k0:j + 1]
        j = k0 + pick_argmax(window == window.max(), side)
        indices.append(j)
    indices.append(k0)
    return path_from_indices(spec, table.start_level, indices[::-1])


def point_to_line(
    bfield: BrownianField,
    start: Point,
    boundary: GridFunction,
    top_level: int,
    side: str = LEFT,
) -> Tuple[float, PassagePath]:
    """
    max over grid s <= s_m <= ... <= s_n of sum_r B_r(s_{r-1}, s_r) - boundary(s_n).

    The boundary enters at the terminal time only.
    """
    check_side(side)
    if boundary.spec != bfield.spec:
        raise DomainError("boundary lives on a different grid than the field")
    table = lpp_table(bfield, start, top_level)
    k0 = table.start_index
    target = table.row(top_level)[k0:] - boundary.values[k0:]
    best = target.max()
    j = k0 + pick_argmax(target == best, side)
    path = backtrack(table, (top_level, bfield.spec.time_at(j)), side)
    return float(best), path


# ═══════════════════════════════════════════════════════════════════════════════
# ORACLES & STRUCTURAL CHECKS
# ═══════════════════════════════════════════════════════════════════════════════

def brute_force_last_passage(bfield: BrownianField, start: Point, end: Point) -> Tuple[float, PassagePath]:
    """Exhaustive maximum over all grid jump-time tuples; small fields only."""
    (m, s), (n, t) = start, end
    spec = bfield.spec
    ks, kt = spec.index_of(s), spec.index_of(t)
    if n < m or kt < ks:
        raise DomainError(f"start {start} is not below-left of end {end}")

    best, best_path = -np.inf, None
    for inner in itertools.combinations_with_replacement(range(ks, kt + 1), n - m):
        path = path_from_indices(spec, m, (ks, *inner, kt))
        e = energy(bfield, path)
        if e > best:
            best, best_path = e, path
    return float(best), best_path


def brute_force_point_to_line(
    bfield: BrownianField, start: Point, boundary: GridFunction, top_level: int
) -> float:
    m, s = start
    spec = bfield.spec
    ks = spec.index_of(s)
    best = -np.inf
    for tail in itertools.combinations_with_replacement(range(ks, spec.n_points), top_level - m + 1):
        path = path_from_indices(spec, m, (ks, *tail))
        best = max(best, energy(bfield, path) - boundary.values[tail[-1]])
    return float(best)


def crossing_inequalities(
    bfield: BrownianField,
    m: int,
    n: int,
    s: float,
    t: float,
    T: float,
    u: float,
    tol: float = SUM_ORDER_TOL,
) -> CheckReport:
    """
    Path-crossing inequalities for s <= t <= T <= u and m <= n.

    Horizontal chain (the difference is nonincreasing in the terminal time):
        B_m(s,t) <= L_{(m,s),(n,u)} - L_{(m,t),(n,u)} <= L_{(m,s),(n,T)} - L_{(m,t),(n,T)}
    Vertical chain, when m < n (nondecreasing in the terminal time):
        0 <= L_{(m,s),(n,T)} - L_{(m+1,s),(n,T)} <= L_{(m,s),(n,u)} - L_{(m+1,s),(n,u)}
    """
    if not (s <= t <= T <= u):
        raise DomainError(f"crossing inequalities need s <= t <= T <= u, got {(s, t, T, u)}")
    if n < m:
        raise DomainError(f"crossing inequalities need m <= n, got m={m}, n={n}")

    from_s = lpp_table(bfield, (m, s), n)
    from_t = lpp_table(bfield, (m, t), n)
    report = CheckReport("crossing_inequalities")

    lower = bfield[m].increment(s, t)
    far = from_s.value(n, u) - from_t.value(n, u)
    near = from_s.value(n, T) - from_t.value(n, T)
    report.record(lower <= far + tol, max(lower - far, 0.0), chain="horizontal", link="lower")
    report.record(far <= near + tol, max(far - near, 0.0), chain="horizontal", link="upper")
    report.details["horizontal"] = (lower, far, near)

    if m < n:
        from_above = lpp_table(bfield, (m + 1, s), n)
        v_near = from_s.value(n, T) - from_above.value(n, T)
        v_far = from_s.value(n, u) - from_above.value(n, u)
        report.record(v_near >= -tol, max(-v_near, 0.0), chain="vertical", link="lower")
        report.record(v_near <= v_far + tol, max(v_near - v_far, 0.0), chain="vertical", link="upper")
        report.details["vertical"] = (v_near, v_far)
    return report


def superadditivity_check(bfield: BrownianField, x: Point, y: Point, z: Point, tol: float = SUM_ORDER_TOL) -> CheckReport:
    """L_{x,z} >= L_{x,y} + L_{y,z} for y between x and z."""
    xz, _ = last_passage(bfield, x, z)
    xy, _ = last_passage(bfield, x, y)
    yz, _ = last_passage(bfield, y, z)
    report = CheckReport("superadditivity")
    report.record(xz >= xy + yz - tol, max(xy + yz - xz, 0.0), x=x, y=y, z=z)
    return report


def shape_estimate(bfield: BrownianField, n: int, t: float = 1.0, origin: Optional[Point] = None) -> float:
    """n^{-1} L_{(0,0),(n, n t)}; converges to 2 sqrt(t)."""
    if n < 1:
        raise ConfigurationError(f"shape estimate needs n >= 1, got {n}")
    m, s = origin if origin is not None else (0, 0.0)
    value, _ = last_passage(bfield, (m, s), (m + n, s + n * t))
    return value / n
