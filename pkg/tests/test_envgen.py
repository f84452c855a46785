from __future__ import annotations

import numpy as np
import pytest

from src.config import STREAM_FIELD
from src.envgen import (
    BrownianField,
    GridFunction,
    GridSpec,
    derive_stream,
    increment,
    linear_function,
    read_field,
    reflect,
    restrict_field,
    sample_brownian,
    sample_field,
    write_field,
)
from src.errors import ConfigurationError, DomainError, WindowError


# ═══════════════════════════════════════════════════════════════════════════════
# GRID SPEC
# ═══════════════════════════════════════════════════════════════════════════════

@pytest.mark.parametrize(
    "t_min, t_max, step",
    [(0.0, 1.0, 0.1), (-1.0, 0.0, 0.1), (-1.0, 1.0, 0.0), (-1.0, 1.0, -0.1), (-0.15, 1.0, 0.1), (-1.0, 1.05, 0.1)],
)
def test_gridspec_rejects_invalid_windows(t_min, t_max, step):
    with pytest.raises(ConfigurationError):
        GridSpec(t_min, t_max, step)


def test_gridspec_times_are_index_arithmetic():
    spec = GridSpec(-2.0, 3.0, 0.1)
    assert spec.n_points == 51
    assert spec.zero_index == 20
    assert spec.times[spec.zero_index] == 0.0
    assert spec.time_at(spec.zero_index + 7) == 7 * 0.1
    assert spec.index_of(0.3) == 23
    assert spec.last_index == 50


def test_gridspec_off_grid_and_out_of_window():
    spec = GridSpec(-1.0, 1.0, 0.1)
    with pytest.raises(DomainError):
        spec.index_of(0.05)
    with pytest.raises(DomainError):
        spec.index_of(1.5)
    with pytest.raises(WindowError):
        spec.nearest_index(3.0)
    assert not spec.contains(0.05)


def test_symmetric_window_mirrors_times():
    spec = GridSpec.symmetric(1.0, 0.1)
    assert spec.is_symmetric
    assert np.array_equal(spec.times, -spec.times[::-1])
    assert not GridSpec(-1.0, 2.0, 0.1).is_symmetric


def test_truncate_keeps_indices():
    spec = GridSpec(-1.0, 2.0, 0.1)
    cut = spec.truncate(1.0)
    assert cut.zero_index == spec.zero_index
    assert cut.t_max == pytest.approx(1.0)
    assert spec.window_indices(-0.5, 0.5) == (5, 15)


# ═══════════════════════════════════════════════════════════════════════════════
# SAMPLING
# ═══════════════════════════════════════════════════════════════════════════════

def test_sample_brownian_is_anchored_and_reproducible(small_spec):
    stream = derive_stream(7, STREAM_FIELD, 3)
    a = sample_brownian(small_spec, 0.5, stream)
    b = sample_brownian(small_spec, 0.5, derive_stream(7, STREAM_FIELD, 3))
    assert a.values[small_spec.zero_index] == 0.0
    assert np.array_equal(a.values, b.values)


def test_streams_differ_by_level_and_replica(small_spec):
    base = sample_brownian(small_spec, 0.0, derive_stream(7, STREAM_FIELD, 0, 0)).values
    other_level = sample_brownian(small_spec, 0.0, derive_stream(7, STREAM_FIELD, 1, 0)).values
    other_replica = sample_brownian(small_spec, 0.0, derive_stream(7, STREAM_FIELD, 0, 1)).values
    assert not np.array_equal(base, other_level)
    assert not np.array_equal(base, other_replica)


def test_negative_levels_get_their_own_streams(small_spec):
    bfield = sample_field(small_spec, range(-2, 3), 11)
    rows = [bfield.values(r) for r in bfield.levels]
    assert len({r.tobytes() for r in rows}) == 5


def test_sample_field_levels_and_anchor(small_spec):
    bfield = sample_field(small_spec, range(0, 1), 5)
    assert bfield.levels == (0,)
    assert bfield[0](0.0) == 0.0


def test_sample_field_rejects_empty_range(small_spec):
    with pytest.raises(ConfigurationError):
        sample_field(small_spec, range(0), 5)


def test_require_levels(small_spec):
    bfield = sample_field(small_spec, range(0, 3), 5)
    bfield.require_levels(0, 2)
    with pytest.raises(DomainError):
        bfield.require_levels(-1, 2)


def test_grid_function_validates_shape_and_finiteness(small_spec):
    with pytest.raises(DomainError):
        GridFunction(small_spec, np.zeros(3))
    values = np.zeros(small_spec.n_points)
    values[4] = np.nan
    with pytest.raises(DomainError):
        GridFunction(small_spec, values)


def test_field_lines_must_share_the_grid(small_spec):
    other = GridSpec(-1.0, 1.0, 0.01)
    with pytest.raises(DomainError):
        BrownianField(small_spec, {0: linear_function(other, 1.0)})


# ═══════════════════════════════════════════════════════════════════════════════
# ELEMENTARY OPERATIONS & PERSISTENCE
# ═══════════════════════════════════════════════════════════════════════════════

def test_increment_and_linear_function():
    spec = GridSpec(-1.0, 1.0, 0.25)
    f = linear_function(spec, 2.0)
    assert increment(f, -0.5, 0.75) == pytest.approx(2.5)
    assert f.increment(0.0, 1.0) == pytest.approx(2.0)


def test_reflect_is_an_involution():
    spec = GridSpec.symmetric(1.0, 0.1)
    f = sample_brownian(spec, 0.3, derive_stream(1, STREAM_FIELD, 0))
    assert np.array_equal(reflect(reflect(f)).values, f.values)
    assert reflect(f)(0.4) == -f(-0.4)


def test_reflect_needs_symmetric_window():
    f = linear_function(GridSpec(-1.0, 2.0, 0.1), 1.0)
    with pytest.raises(DomainError):
        reflect(f)


def test_restrict_field_cuts_every_line(small_spec):
    bfield = sample_field(small_spec, range(0, 2), 3)
    cut = restrict_field(bfield, 2.0)
    assert cut.spec.t_max == pytest.approx(2.0)
    assert np.array_equal(cut.values(1), bfield.values(1)[:cut.spec.n_points])


def test_field_csv_keeps_twelve_digits(tmp_path):
    spec = GridSpec(-1.0, 1.0, 0.05)
    bfield = sample_field(spec, range(-1, 2), 99, replica=4)
    back = read_field(write_field(bfield, tmp_path / "field"))
    assert back.spec == spec
    assert back.levels == bfield.levels
    assert (back.seed, back.replica) == (99, 4)
    for r in bfield.levels:
        assert np.allclose(back.values(r), bfield.values(r), rtol=1e-11, atol=1e-12)


# ═══════════════════════════════════════════════════════════════════════════════
# DISTRIBUTIONAL
# ═══════════════════════════════════════════════════════════════════════════════

@pytest.mark.slow
def test_drift_is_recovered_from_endpoint_means():
    spec = GridSpec.symmetric(10.0, 0.1)
    lam = 0.7
    ends = np.array([
        sample_brownian(spec, lam, derive_stream(21, STREAM_FIELD, 0, i))(10.0) / 10.0
        for i in range(4000)
    ])
    # sd of one endpoint slope is 1/sqrt(10)
    assert abs(ends.mean() - lam) < 4 * np.sqrt(0.1 / len(ends))


@pytest.mark.slow
def test_lines_are_uncorrelated_across_levels():
    spec = GridSpec(-1.0, 5.0, 0.1)
    pairs = np.array([
        [f(5.0) for f in sample_field(spec, range(0, 2), 8, replica=i).lines.values()]
        for i in range(4000)
    ])
    rho = np.corrcoef(pairs[:, 0], pairs[:, 1])[0, 1]
    assert abs(rho) < 0.07
