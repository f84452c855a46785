from __future__ import annotations

import numpy as np
import pandas as pd
import pytest

from src.envgen import GridSpec, read_manifest, sample_field
from src.errors import ConfigurationError, WindowError
from src.stationary import (
    NEGATIVE_CONTROL,
    build_stationary,
    burke_blocks,
    burke_check,
    queue_fixed_point_check,
    sandwich_check,
    sandwich_fraction,
    write_stationary,
)


@pytest.fixture
def queue_spec():
    return GridSpec(-30.0, 10.0, 0.01)


@pytest.fixture
def stationary_stack(queue_spec):
    return build_stationary(sample_field(queue_spec, range(0, 4), 77), 1.0, 3)


# ═══════════════════════════════════════════════════════════════════════════════
# STACK
# ═══════════════════════════════════════════════════════════════════════════════

def test_stack_levels(stationary_stack):
    assert sorted(stationary_stack.Y) == [0, 1, 2, 3]
    assert sorted(stationary_stack.q) == [1, 2, 3]
    assert sorted(stationary_stack.W) == [0, 1, 2]
    assert stationary_stack.n_levels == 3
    assert stationary_stack.w_field().levels == (0, 1, 2)


def test_departures_plus_field_conserve_arrivals_plus_service(stationary_stack):
    s = stationary_stack
    for m in range(1, 4):
        lhs = s.Y[m].values + s.W[m - 1].values
        rhs = s.Y[m - 1].values + s.bfield.values(m)
        assert np.allclose(lhs, rhs, atol=1e-12)


def test_queues_are_nonnegative_and_departures_anchored(stationary_stack):
    k0 = stationary_stack.spec.zero_index
    for m in range(1, 4):
        assert stationary_stack.q[m].values.min() >= 0.0
        assert stationary_stack.Y[m].values[k0] == 0.0


def test_truncation_flags_are_prefixes(stationary_stack):
    for m in range(1, 4):
        flags = stationary_stack.truncated[m]
        k = int(flags.sum())
        assert flags[0]
        assert flags[:k].all() and not flags[k:].any()
    assert stationary_stack.dirty_until(1) <= stationary_stack.dirty_until()


@pytest.mark.parametrize("lam, n_levels", [(0.0, 2), (-1.0, 2), (1.0, 0), (1.0, 5)])
def test_build_rejects_bad_arguments(queue_spec, lam, n_levels):
    bfield = sample_field(queue_spec, range(0, 4), 1)
    with pytest.raises(ConfigurationError):
        build_stationary(bfield, lam, n_levels)


def test_write_stationary(tmp_path, stationary_stack):
    directory = write_stationary(stationary_stack, tmp_path / "stationary")
    assert (directory / "Y_3.csv").exists()
    assert (directory / "q_1.csv").exists()
    assert (directory / "W_0.csv").exists()
    manifest = read_manifest(directory / "stack.manifest")
    assert manifest["stations"] == "3"
    assert manifest["sampler"] == "stationary"


# ═══════════════════════════════════════════════════════════════════════════════
# BURKE PROPERTY
# ═══════════════════════════════════════════════════════════════════════════════

def test_burke_block_columns(stationary_stack):
    row = burke_blocks(stationary_stack, [1.0, 0.5, 0.5], 0.5, negative_control=True)
    assert set(row) == {
        "W0_past", "q1", "Y0_future",
        "W1_past", "q2", "Y1_between", "B1_future",
        "W2_past", "q3", "B2_future",
        "Y3_past", "B3_future",
        NEGATIVE_CONTROL,
    }
    assert row["q1"] == stationary_stack.q[1](1.0)
    assert row["Y1_between"] == pytest.approx(stationary_stack.Y[1].increment(0.5, 1.0))


def test_burke_blocks_reject_bad_staircases(stationary_stack):
    with pytest.raises(ConfigurationError):
        burke_blocks(stationary_stack, [0.0, 1.0], 0.5)
    with pytest.raises(ConfigurationError):
        burke_blocks(stationary_stack, [1.0, 0.5, 0.0, -0.5], 0.5)
    with pytest.raises(ConfigurationError):
        burke_blocks(stationary_stack, [1.0], 0.0)


def test_burke_blocks_stay_off_the_truncated_prefix(stationary_stack):
    with pytest.raises(WindowError):
        burke_blocks(stationary_stack, [-29.0], 1.0)


def test_burke_check_on_independent_columns(rng):
    n = 1000
    frame = pd.DataFrame({
        "replica": np.arange(n),
        "q1": rng.exponential(1.0, n),
        "Y0_future": rng.normal(1.0, 1.0, n),
        "W0_past": rng.normal(0.0, 1.0, n),
    })
    frame[NEGATIVE_CONTROL] = frame["q1"] + rng.normal(0.0, 0.5, n)
    report = burke_check(frame)
    assert report.passed, report.details.get("first_violation")
    assert report.checked == 4
    assert report.details["control_detected"]


def test_burke_check_catches_dependence(rng):
    n = 1000
    q1 = rng.exponential(1.0, n)
    frame = pd.DataFrame({"q1": q1, "Y0_future": q1 + rng.normal(0.0, 0.3, n)})
    report = burke_check(frame)
    assert not report.passed
    assert "control_detected" not in report.details


# ═══════════════════════════════════════════════════════════════════════════════
# QUEUEING FIXED POINT & SANDWICH
# ═══════════════════════════════════════════════════════════════════════════════

def test_queue_fixed_point_reports(rng):
    lam, lag = 1.0, 0.5
    y0 = rng.normal(lam * lag, np.sqrt(lag), 2000)
    ym = rng.normal(lam * lag, np.sqrt(lag), 2000)
    reports = queue_fixed_point_check(y0, ym, lam, lag)
    assert [r.statistic for r in reports] == ["ks_departures_normal", "ks_departures_vs_arrivals"]
    assert all(r.passed for r in reports)


@pytest.fixture
def sandwich_field():
    return sample_field(GridSpec(-20.0, 12.0, 0.05), range(0, 7), 5)


def test_sandwich_row(sandwich_field):
    row = sandwich_check(sandwich_field, 1.0, 0.5, 2.0, 0.0, 1.0, 5)
    for key in ("h_delta", "h_gamma", "v_delta", "v_gamma", "h_target", "v_target"):
        assert np.isfinite(row[key])
    assert row["h_bracketed"] == (row["h_delta"] <= row["h_target"] <= row["h_gamma"])
    assert row["v_target"] >= 0.0


@pytest.mark.parametrize(
    "delta_hat, gamma_hat, s, t, n",
    [(1.0, 2.0, 0.0, 1.0, 5), (0.5, 0.9, 0.0, 1.0, 5), (0.5, 2.0, 1.0, 1.0, 5), (0.5, 2.0, 0.0, 1.0, 7), (0.1, 2.0, 0.0, 1.0, 5)],
)
def test_sandwich_rejects_bad_geometry(sandwich_field, delta_hat, gamma_hat, s, t, n):
    with pytest.raises(ConfigurationError):
        sandwich_check(sandwich_field, 1.0, delta_hat, gamma_hat, s, t, n)


def test_sandwich_fraction_skips_truncated_rows():
    rows = pd.DataFrame({
        "truncated": [False, False, True, False],
        "h_bracketed": [True, False, True, True],
        "v_bracketed": [True, True, False, False],
    })
    summary = sandwich_fraction(rows)
    assert summary["replicas"] == 3
    assert summary["h_fraction"] == pytest.approx(2 / 3)
    assert summary["v_fraction"] == pytest.approx(1 / 3)
    assert summary["both_fraction"] == pytest.approx(1 / 3)


def test_sandwich_fraction_of_nothing():
    rows = pd.DataFrame({"truncated": [True], "h_bracketed": [True], "v_bracketed": [True]})
    summary = sandwich_fraction(rows)
    assert summary["replicas"] == 0
    assert np.isnan(summary["both_fraction"])


# ═══════════════════════════════════════════════════════════════════════════════
# DISTRIBUTIONAL
# ═══════════════════════════════════════════════════════════════════════════════

@pytest.mark.slow
def test_queue_lengths_are_exponential_in_mean():
    spec = GridSpec(-20.0, 5.0, 0.01)
    lam = 1.0
    q2 = np.array([
        build_stationary(sample_field(spec, range(0, 3), 31, replica=i), lam, 2).q[2](0.0)
        for i in range(400)
    ])
    # Exp(1) mean less the grid undershoot of a reverse-time sup
    assert 0.75 < q2.mean() < 1.1
