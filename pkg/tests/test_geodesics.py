from __future__ import annotations

import numpy as np
import pytest

from src.busemann import limit_stack, sample_busemann_recursion
from src.envgen import GridFunction, GridSpec, sample_field
from src.errors import ConfigurationError, DomainError, InsufficientDataError
from src.geodesics import (
    LEFT,
    RIGHT,
    busemann_geodesic,
    coalescence_experiment,
    crossing_check,
    crossing_sweep,
    direction_fit,
    dual_energy_check,
    dual_geodesic,
    geodesic_direction,
    geodesic_energy_check,
    geodesic_monotonicity_check,
    midpoint_experiment,
    midpoint_hits,
    near_tie_scan,
    passes_near,
)
from src.lpp import PassagePath


# ═══════════════════════════════════════════════════════════════════════════════
# CONSTRUCTION
# ═══════════════════════════════════════════════════════════════════════════════

@pytest.mark.parametrize("side", [LEFT, RIGHT])
def test_geodesic_jump_times_are_nondecreasing(recursion_stack, side):
    g = busemann_geodesic(recursion_stack, (0, 0.0), side)
    assert g.start_level == 0
    assert g.top_level == recursion_stack.max_level - 1
    assert g.tau(-1) == 0.0
    assert all(a <= b for a, b in zip(g.jump_times, g.jump_times[1:]))
    frame = g.to_frame()
    assert list(frame.columns) == ["level", "jump_time", "truncated"]
    assert len(frame) == g.top_level - g.start_level + 2


def test_geodesic_needs_levels_above_its_start(recursion_stack):
    with pytest.raises(DomainError):
        busemann_geodesic(recursion_stack, (5, 0.0))


@pytest.mark.parametrize("side", [LEFT, RIGHT])
def test_dual_geodesic_descends(recursion_stack, side):
    d = dual_geodesic(recursion_stack, (4, 0.0), side)
    assert d.bottom_level == recursion_stack.min_level
    assert d.tau(4) == 0.0
    assert all(a >= b for a, b in zip(d.jump_times, d.jump_times[1:]))


def test_right_dual_jumps_are_last_zeros_of_v(recursion_stack):
    spec = recursion_stack.spec
    d = dual_geodesic(recursion_stack, (4, 1.0), RIGHT)
    for r in range(4, d.bottom_level, -1):
        if d.is_truncated(r - 1):
            break
        k, j = spec.index_of(d.tau(r - 1)), spec.index_of(d.tau(r))
        v = recursion_stack.v(r).values
        assert v[k] == 0.0
        assert np.all(v[k + 1:j + 1] > 0.0)


def test_dual_geodesic_rejects_bottom_above_start(recursion_stack):
    with pytest.raises(DomainError):
        dual_geodesic(recursion_stack, (1, 0.0), RIGHT, bottom_level=2)


# ═══════════════════════════════════════════════════════════════════════════════
# IDENTITIES
# ═══════════════════════════════════════════════════════════════════════════════

@pytest.mark.parametrize("side", [LEFT, RIGHT])
@pytest.mark.parametrize("start", [(0, 0.0), (1, -1.5), (-1, 2.0)])
def test_geodesic_energy_identities(recursion_stack, side, start):
    g = busemann_geodesic(recursion_stack, start, side)
    report = geodesic_energy_check(recursion_stack, g)
    assert report.passed, report.details.get("first_violation")


@pytest.mark.parametrize("side", [LEFT, RIGHT])
def test_dual_energy_identities(recursion_stack, side):
    d = dual_geodesic(recursion_stack, (4, 0.5), side)
    report = dual_energy_check(recursion_stack, d)
    assert report.passed, report.details.get("first_violation")
    assert report.details["cell_gap"] >= 0.0


def test_jump_times_are_ordered(recursion_stack):
    starts = [(0, -1.0), (0, 0.0), (0, 1.0), (1, 0.5)]
    report = geodesic_monotonicity_check(recursion_stack, starts)
    assert report.passed, report.details.get("first_violation")


def test_direction_ordering_needs_estimator_stacks(recursion_stack):
    with pytest.raises(ConfigurationError):
        geodesic_monotonicity_check(recursion_stack, [(0, 0.0)], stack_high=recursion_stack)


def test_direction_ordering_on_coupled_estimator_stacks():
    bfield = sample_field(GridSpec(-2.0, 12.0, 0.01), range(-1, 11), 4)
    low = limit_stack(bfield, 0.5, (0, 3), 10, window_max=5.0)
    high = limit_stack(bfield, 1.0, (0, 3), 10, window_max=5.0)
    report = geodesic_monotonicity_check(low, [(0, 0.0), (0, 1.0)], stack_high=high)
    assert report.passed, report.details.get("first_violation")


# ═══════════════════════════════════════════════════════════════════════════════
# CROSSING & COALESCENCE
# ═══════════════════════════════════════════════════════════════════════════════

@pytest.mark.parametrize("m", [-1, 0, 2, 3])
def test_crossing_rules(recursion_stack, m):
    times = (-1.0, 0.0, 0.5, 1.0)
    for i, s in enumerate(times):
        for t in times[i:]:
            report = crossing_sweep(recursion_stack, m, s, t)
            assert report.passed, report.details.get("first_violation")


def test_crossing_check_validates_its_inputs(recursion_stack):
    g = busemann_geodesic(recursion_stack, (0, 0.0), LEFT, top_level=0)
    with pytest.raises(ConfigurationError):
        crossing_check(g, dual_geodesic(recursion_stack, (1, 0.0), LEFT, bottom_level=0))
    with pytest.raises(DomainError):
        crossing_check(g, dual_geodesic(recursion_stack, (2, 0.0), RIGHT, bottom_level=0))
    with pytest.raises(DomainError):
        crossing_check(g, dual_geodesic(recursion_stack, (1, -1.0), RIGHT, bottom_level=0))


def test_identical_starts_coalesce_immediately(recursion_stack):
    assert coalescence_experiment(recursion_stack, (0, 0.0), (0, 0.0)) == (True, 0)


def test_coalescence_level_is_where_jump_times_agree(recursion_stack):
    met, level = coalescence_experiment(recursion_stack, (0, 0.0), (0, 0.5), LEFT)
    if met:
        g1 = busemann_geodesic(recursion_stack, (0, 0.0), LEFT)
        g2 = busemann_geodesic(recursion_stack, (0, 0.5), LEFT)
        assert g1.tau(level - 1) == g2.tau(level - 1)
        assert g1.jump_times[level:] == g2.jump_times[level:]
    else:
        assert level is None


# ═══════════════════════════════════════════════════════════════════════════════
# NEAR TIES
# ═══════════════════════════════════════════════════════════════════════════════

@pytest.fixture
def stepped():
    spec = GridSpec(-0.2, 0.5, 0.1)
    return spec, np.array([3.0, 2.0, 2.5, 1.0, 0.5, 0.45, 0.0, -1.0])


def test_near_ties_within_epsilon(stepped):
    spec, values = stepped
    f = GridFunction(spec, values)
    assert np.allclose(near_tie_scan(f, 0.1), [0.2, 0.3])
    assert len(near_tie_scan(f, 0.0)) == 0


def test_exact_ties_are_reported_in_pairs(stepped):
    spec, values = stepped
    values = values.copy()
    values[5] = 0.5
    assert np.allclose(near_tie_scan(GridFunction(spec, values), 0.0), [0.2, 0.3])


def test_near_tie_scan_rejects_negative_epsilon(stepped):
    spec, values = stepped
    with pytest.raises(ConfigurationError):
        near_tie_scan(GridFunction(spec, values), -0.1)


# ═══════════════════════════════════════════════════════════════════════════════
# DIRECTION & MIDPOINT
# ═══════════════════════════════════════════════════════════════════════════════

def test_direction_fit_needs_enough_levels(recursion_stack):
    g = busemann_geodesic(recursion_stack, (0, 0.0))
    with pytest.raises(InsufficientDataError):
        direction_fit(g)


def test_passes_near():
    path = PassagePath(0, (0.0, 0.5, 1.0))
    assert passes_near(path, (0, 0.25), 0.01)
    assert passes_near(path, (1, 0.495), 0.01)
    assert not passes_near(path, (1, 0.2), 0.01)
    assert not passes_near(path, (3, 0.5), 0.01)


def test_midpoint_hits_rows():
    spec = GridSpec.symmetric(3.0, 0.01)
    bfield = sample_field(spec, range(-2, 3), 6)
    rows = midpoint_hits(bfield, 1.0, 1.0, (0, 0.0), [0, 1, 2])
    assert [r["n"] for r in rows] == [0, 1, 2]
    assert rows[0]["hit"] is True


def test_midpoint_rays_must_fit_the_window():
    spec = GridSpec.symmetric(3.0, 0.01)
    bfield = sample_field(spec, range(-5, 6), 6)
    with pytest.raises(ConfigurationError):
        midpoint_hits(bfield, 1.0, 1.0, (0, 0.0), [0, 5])


def test_midpoint_experiment_curve():
    spec = GridSpec.symmetric(3.0, 0.02)
    curve = midpoint_experiment(spec, 6, 1.0, 1.0, (0, 0.0), [0, 1, 2], replicas=4)
    assert list(curve.columns) == ["n", "probability"]
    assert curve["probability"].iloc[0] == 1.0
    assert curve["probability"].between(0.0, 1.0).all()


@pytest.mark.slow
def test_geodesic_direction_estimates_theta():
    spec = GridSpec(-5.0, 70.0, 0.01)
    slopes = []
    for i in range(30):
        bfield = sample_field(spec, range(-1, 40), 12, replica=i)
        stack = sample_busemann_recursion(bfield, 1.0, (0, 30))
        slopes.append(geodesic_direction(busemann_geodesic(stack, (0, 0.0))))
    assert abs(np.mean(slopes) - 1.0) < 0.2
