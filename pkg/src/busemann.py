"""
═══════════════════════════════════════════════════════════════════════════════
BUSEMANN PROCESS AT A FIXED DIRECTION
═══════════════════════════════════════════════════════════════════════════════

Two samplers for the horizontal and vertical Busemann increments

    h_m(t) = B((m,0),(m,t))        v_m(t) = B((m-1,t),(m,t))

in direction theta, plus the dual environment X_m = R(h_m, B_{m-1}).

    recursion   h_N is a fresh Brownian motion with drift 1/sqrt(theta); going
                down, v_{m+1} = Q(h_{m+1}, B_m) and h_m = D(h_{m+1}, B_m).
                Exact in law at every level, but not the Busemann function of
                the given field.
    limit       L_{x,(n,n theta)} - L_{y,(n,n theta)} on the given field at a
                finite n. Biased in law, but coupled across directions, so
                monotonicity in theta is a deterministic statement.
═══════════════════════════════════════════════════════════════════════════════
"""

from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from types import MappingProxyType
from typing import Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from src.config import (
    EXACT_TOL,
    SEED_DEPTH_FACTOR,
    SEED_DEPTH_MIN,
    STACK_MANIFEST_NAME,
    STREAM_BUSEMANN,
    SUM_ORDER_TOL,
)
from src.distlib import CheckReport
from src.envgen import (
    BrownianField,
    GridFunction,
    GridSpec,
    derive_stream,
    grid_manifest,
    restrict_field,
    sample_brownian,
    write_grid_function,
    write_manifest,
)
from src.errors import ConfigurationError, DomainError, WindowError
from src.lpp import Point, terminal_table
from src.queueops import invert_check, queue_D, queue_maps, queue_Q, queue_R

logger = logging.getLogger(__name__)

RECURSION = "recursion"
LIMIT = "limit"


# ═══════════════════════════════════════════════════════════════════════════════
# TYPES
# ═══════════════════════════════════════════════════════════════════════════════

@dataclass(frozen=True, eq=False)
class BusemannSlice:
    """h_m, v_m and X_m on one level, with the points whose queue sup was truncated."""

    theta: float
    level: int
    h: GridFunction
    v: GridFunction
    x_dual: Optional[GridFunction] = None
    truncated: Optional[np.ndarray] = None

    def __post_init__(self):
        flags = self.truncated
        if flags is None:
            flags = np.zeros(self.h.spec.n_points, dtype=bool)
        object.__setattr__(self, "truncated", np.asarray(flags, dtype=bool))

    @property
    def first_truncated(self) -> int:
        hits = np.flatnonzero(self.truncated)
        return int(hits[0]) if len(hits) else len(self.truncated)


@dataclass(frozen=True, eq=False)
class BusemannStack:
    """Consecutive Busemann slices built on one field."""

    theta: float
    bfield: BrownianField
    slices: Mapping[int, BusemannSlice]
    top_level: int
    sampler: str
    seed: Optional[int] = None
    terminal: Optional[Point] = None

    def __post_init__(self):
        if not self.slices:
            raise ConfigurationError("a Busemann stack needs at least one level")
        object.__setattr__(self, "slices", MappingProxyType(dict(sorted(self.slices.items()))))

    @property
    def levels(self) -> Tuple[int, ...]:
        return tuple(self.slices)

    @property
    def min_level(self) -> int:
        return self.levels[0]

    @property
    def max_level(self) -> int:
        return self.levels[-1]

    @property
    def spec(self) -> GridSpec:
        return self.bfield.spec

    def __getitem__(self, level: int) -> BusemannSlice:
        try:
            return self.slices[level]
        except KeyError:
            raise DomainError(f"level {level} not in stack levels {self.min_level}..{self.max_level}") from None

    def __contains__(self, level: int) -> bool:
        return level in self.slices

    def h(self, level: int) -> GridFunction:
        return self[level].h

    def v(self, level: int) -> GridFunction:
        return self[level].v

    def x_dual(self, level: int) -> GridFunction:
        x = self[level].x_dual
        if x is None:
            raise DomainError(f"level {level} carries no dual line")
        return x

    def clean_until(self, low: int, high: int) -> int:
        """First grid index flagged on any level in low..high."""
        return min(self[r].first_truncated for r in range(low, high + 1))


def seed_depth(theta: float) -> int:
    return max(SEED_DEPTH_MIN, math.ceil(SEED_DEPTH_FACTOR / theta))


def _check_theta(theta: float) -> float:
    if not theta > 0:
        raise ConfigurationError(f"theta must be positive, got {theta}")
    return float(theta)


# ═══════════════════════════════════════════════════════════════════════════════
# STATIONARY RECURSION SAMPLER
# ═══════════════════════════════════════════════════════════════════════════════

def sample_busemann_recursion(
    bfield: BrownianField,
    theta: float,
    levels: Tuple[int, int],
    top_level: Optional[int] = None,
    seed: Optional[int] = None,
) -> BusemannStack:
    """
    Busemann slices on levels[0]..levels[1] by the queueing recursion.

    Args:
        bfield: Environment; must carry levels levels[0]-1 .. top_level-1
        theta: Direction
        levels: Inclusive (low, high) range of target levels
        top_level: Seed level N (default high + max(10, ceil(4/theta)))
        seed: Master seed of the h_N stream (default: the field's seed)

    Returns:
        BusemannStack tagged "recursion"
    """
    theta = _check_theta(theta)
    low, high = levels
    if low > high:
        raise ConfigurationError(f"empty level range {levels}")
    N = high + seed_depth(theta) if top_level is None else int(top_level)
    if N <= high:
        raise ConfigurationError(f"seed level {N} must lie above the highest target level {high}")
    seed = bfield.seed if seed is None else seed
    if seed is None:
        raise ConfigurationError("the recursion sampler needs a seed for its top line")
    bfield.require_levels(low - 1, N - 1)

    spec = bfield.spec
    h = sample_brownian(spec, 1.0 / math.sqrt(theta), derive_stream(seed, STREAM_BUSEMANN, N, bfield.replica))
    dirty = None
    slices = {}
    for r in range(N, low - 1, -1):
        result, D, R = queue_maps(h, bfield[r - 1], dirty)
        if r <= high:
            slices[r] = BusemannSlice(theta, r, h, result.queue, R, result.truncated)
        dirty = result.first_truncated
        if dirty <= spec.zero_index:
            # D shifts by Q(0); once that is flagged every lower level is
            dirty = 0
        h = D

    logger.debug("recursion stack theta=%g levels %d..%d seeded at %d", theta, low, high, N)
    return BusemannStack(theta, bfield, slices, N, RECURSION, seed=seed)


# ═══════════════════════════════════════════════════════════════════════════════
# FINITE-n LIMIT ESTIMATOR
# ═══════════════════════════════════════════════════════════════════════════════

def terminal_point(spec: GridSpec, theta: float, n_levels: int) -> Point:
    """(n, grid time nearest n * theta); WindowError when it leaves the window."""
    j = spec.nearest_index(n_levels * theta)
    return n_levels, spec.time_at(j)


def estimate_busemann_limit(
    bfield: BrownianField, theta: float, x: Point, y: Point, n_levels: int
) -> float:
    """L_{x,(n, n theta)} - L_{y,(n, n theta)}."""
    theta = _check_theta(theta)
    if x == y:
        return 0.0
    n, T = terminal_point(bfield.spec, theta, n_levels)
    (m, s), (k, t) = x, y
    if max(m, k) > n or max(s, t) > T:
        raise WindowError(f"points {x}, {y} do not lie below-left of the terminal point {(n, T)}")
    bottom = min(m, k)
    values = terminal_table(bfield, (n, T), bottom)
    spec = bfield.spec
    return float(values[m - bottom, spec.index_of(s)] - values[k - bottom, spec.index_of(t)])


def limit_stack(
    bfield: BrownianField,
    theta: float,
    levels: Tuple[int, int],
    n_levels: int,
    window_max: Optional[float] = None,
) -> BusemannStack:
    """
    Busemann slices from the finite-n estimator, all sharing one terminal point.

    Profiles exist only left of the terminal time, so the stack (and the field
    it carries) is cut at `window_max`, by default the terminal time itself.
    """
    theta = _check_theta(theta)
    low, high = levels
    if low > high:
        raise ConfigurationError(f"empty level range {levels}")
    n, T = terminal_point(bfield.spec, theta, n_levels)
    if n < high:
        raise WindowError(f"terminal level {n} below the highest target level {high}")
    if T <= 0:
        raise WindowError(f"terminal time {T} must be positive")
    cut = T if window_max is None else float(window_max)
    if cut > T:
        raise WindowError(f"window_max {cut} exceeds the terminal time {T}")

    values = terminal_table(bfield, (n, T), low - 1)
    small = restrict_field(bfield, cut)
    spec = small.spec
    k0, size = spec.zero_index, spec.n_points

    slices = {}
    for m in range(low, high + 1):
        G = values[m - low + 1, :size]
        below = values[m - low, :size]
        h = GridFunction(spec, G[k0] - G)
        v = GridFunction(spec, below - G)
        x = queue_R(h, small[m - 1], v)
        slices[m] = BusemannSlice(theta, m, h, v, x)

    logger.debug("limit stack theta=%g levels %d..%d terminal (%d, %g)", theta, low, high, n, T)
    return BusemannStack(theta, small, slices, n, LIMIT, seed=bfield.seed, terminal=(n, T))


# ═══════════════════════════════════════════════════════════════════════════════
# ASSEMBLED INCREMENTS
# ═══════════════════════════════════════════════════════════════════════════════

def busemann_increment(stack: BusemannStack, x: Point, y: Point) -> float:
    """
    B(x, y) by additivity: along level m from t to u, then up at u.

        B((m,t),(n,u)) = h_m(t,u) + sum_{r=m+1}^{n} v_r(u)
    """
    (m, t), (n, u) = x, y
    if m > n:
        return -busemann_increment(stack, y, x)
    spec = stack.spec
    jt, ju = spec.index_of(t), spec.index_of(u)
    h = stack.h(m).values
    total = h[ju] - h[jt]
    for r in range(m + 1, n + 1):
        total += stack.v(r).values[ju]
    return float(total)


def additivity_check(stack: BusemannStack, points: Sequence[Point], tol: float = SUM_ORDER_TOL) -> CheckReport:
    """B(x,y) + B(y,z) = B(x,z) over every triple of `points`."""
    report = CheckReport("busemann_additivity")
    for x, y, z in itertools.permutations(points, 3):
        dev = abs(busemann_increment(stack, x, y) + busemann_increment(stack, y, z) - busemann_increment(stack, x, z))
        report.record(dev <= tol, dev, x=x, y=y, z=z)
    return report


def dual_field(stack: BusemannStack) -> BrownianField:
    """{X_m} as an environment on the stack's levels."""
    levels = stack.levels
    if list(levels) != list(range(levels[0], levels[-1] + 1)):
        raise DomainError(f"stack levels {levels} are not consecutive")
    lines = {m: stack.x_dual(m) for m in levels}
    return BrownianField(stack.spec, lines, drift=0.0, seed=stack.seed, replica=stack.bfield.replica)


# ═══════════════════════════════════════════════════════════════════════════════
# STRUCTURAL CHECKS
# ═══════════════════════════════════════════════════════════════════════════════

def slice_invariants_check(stack: BusemannStack, tol: float = SUM_ORDER_TOL) -> CheckReport:
    """v >= 0, h(0) = X(0) = 0 and h_m(s,t) >= B_m(s,t) on every level."""
    report = CheckReport("busemann_slices")
    k0 = stack.spec.zero_index
    for m in stack.levels:
        sl = stack[m]
        low_v = float(sl.v.values.min())
        report.record(low_v >= -tol, max(-low_v, 0.0), level=m, invariant="v >= 0")
        anchors = [abs(sl.h.values[k0])]
        if sl.x_dual is not None:
            anchors.append(abs(sl.x_dual.values[k0]))
        report.record(max(anchors) <= tol, max(anchors), level=m, invariant="anchored at 0")
        if m in stack.bfield:
            # h_m - B_m nondecreasing
            slack = np.diff(sl.h.values - stack.bfield.values(m))
            worst = float(-slack.min()) if len(slack) else 0.0
            report.record(worst <= tol, max(worst, 0.0), level=m, invariant="h >= B increments")
    return report


def recursion_consistency_check(stack: BusemannStack, tol: float = EXACT_TOL) -> CheckReport:
    """h_m = D(h_{m+1}, B_m) and v_{m+1} = Q(h_{m+1}, B_m) between consecutive stored levels."""
    report = CheckReport("busemann_recursion")
    for m in stack.levels:
        if m + 1 not in stack:
            continue
        upper = stack.h(m + 1)
        line = stack.bfield[m]
        q = queue_Q(upper, line)
        d = queue_D(upper, line, q)
        dev_h = float(np.abs(d.values - stack.h(m).values).max())
        dev_v = float(np.abs(q.values - stack.v(m + 1).values).max())
        report.record(dev_h <= tol, dev_h, level=m, relation="h = D")
        report.record(dev_v <= tol, dev_v, level=m + 1, relation="v = Q")
    return report


def monotonicity_check(
    bfield: BrownianField,
    gamma: float,
    theta: float,
    levels: Tuple[int, int],
    n_levels: int,
    tol: float = SUM_ORDER_TOL,
) -> Tuple[CheckReport, BusemannStack, BusemannStack]:
    """
    Coupled comparison of directions gamma <= theta on one field:
    v^gamma <= v^theta pointwise and h^theta(s,t) <= h^gamma(s,t) for s < t.

    Both stacks come from the finite-n estimator with a common cut, where the
    path-crossing inequalities make the ordering deterministic.
    """
    gamma, theta = _check_theta(gamma), _check_theta(theta)
    if gamma > theta:
        raise ConfigurationError(f"monotonicity needs gamma <= theta, got {gamma} > {theta}")
    _, cut = terminal_point(bfield.spec, gamma, n_levels)
    low_stack = limit_stack(bfield, gamma, levels, n_levels, window_max=cut)
    high_stack = limit_stack(bfield, theta, levels, n_levels, window_max=cut)

    report = CheckReport("busemann_monotonicity")
    spec = low_stack.spec
    for m in low_stack.levels:
        v_gap = high_stack.v(m).values - low_stack.v(m).values
        report.record(v_gap.min() >= -tol, max(-float(v_gap.min()), 0.0), level=m, quantity="v")
        # h^gamma - h^theta nondecreasing
        h_gap = low_stack.h(m).values - high_stack.h(m).values
        steps = np.diff(h_gap)
        report.record(steps.min() >= -tol, max(-float(steps.min()), 0.0), level=m, quantity="h")
    if spec.contains(1.0):
        m = low_stack.min_level
        report.details["h_gap_unit"] = low_stack.h(m)(1.0) - high_stack.h(m)(1.0)
    return report, low_stack, high_stack


def reversal_duality_check(
    stack: BusemannStack, interior: Optional[Tuple[int, int]] = None, tol: float = SUM_ORDER_TOL
) -> CheckReport:
    """
    The stored h_{m-1} and X_m are (D, R)(h_m, B_{m-1}), and the reverse maps
    take that stored pair back to h_m and B_{m-1}.

    Stored lines are compared with the recomputed maps pointwise left of the
    level's first truncated index; the reversal is the queue inversion check
    run on the stored pair.
    """
    report = CheckReport("reversal_duality")
    k0 = stack.spec.zero_index
    for m in stack.levels:
        if m - 1 not in stack.bfield:
            continue
        sl = stack[m]
        B = stack.bfield[m - 1]
        fwd, D, R = queue_maps(sl.h, B, sl.first_truncated)
        clean = fwd.first_truncated if fwd.first_truncated > k0 else 0
        Y = stack.h(m - 1) if m - 1 in stack else None
        for quantity, kept, expected in (("h", Y, D), ("x", sl.x_dual, R)):
            if kept is None:
                continue
            dev = np.abs(kept.values[:clean] - expected.values[:clean])
            worst = float(dev.max()) if len(dev) else 0.0
            report.record(worst <= tol, worst, level=m, quantity=quantity)
        sub = invert_check(sl.h, B, interior, dirty_from=sl.first_truncated, departures=Y, unused=sl.x_dual)
        report = report.merge(sub)
    report.name = "reversal_duality"
    return report


# ═══════════════════════════════════════════════════════════════════════════════
# PERSISTENCE
# ═══════════════════════════════════════════════════════════════════════════════

def write_stack(stack: BusemannStack, directory: Union[str, Path]) -> Path:
    """`h_<m>.csv`, `v_<m>.csv`, `X_<m>.csv` per level plus `stack.manifest`."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for m in stack.levels:
        sl = stack[m]
        write_grid_function(sl.h, directory / f"h_{m}.csv")
        write_grid_function(sl.v, directory / f"v_{m}.csv")
        if sl.x_dual is not None:
            write_grid_function(sl.x_dual, directory / f"X_{m}.csv")
    write_manifest(
        directory / STACK_MANIFEST_NAME,
        {
            **grid_manifest(stack.spec),
            "theta": repr(stack.theta),
            "sampler": stack.sampler,
            "seed": stack.seed,
            "replica": stack.bfield.replica,
            "top_level": stack.top_level,
            "levels": ",".join(str(m) for m in stack.levels),
        },
    )
    return directory
