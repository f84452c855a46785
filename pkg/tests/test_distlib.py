from __future__ import annotations

import numpy as np
import pytest

from src.distlib import (
    CheckReport,
    TestReport,
    argmax_tail,
    correlation_check,
    distance_correlation,
    exp_sup_cdf,
    exponential_cdf,
    grid_max_shift,
    increment_cdf_D,
    increment_D_sample,
    ks_distance,
    ks_report,
    ks_threshold,
    moment_check,
    sup_argmax_sample,
    tail_report,
    two_sample_ks,
    two_sample_threshold,
    variance_check,
)
from src.envgen import GridSpec
from src.errors import DomainError, InsufficientDataError


# ═══════════════════════════════════════════════════════════════════════════════
# CLOSED-FORM LAWS
# ═══════════════════════════════════════════════════════════════════════════════

def test_exp_sup_cdf():
    assert exp_sup_cdf(1.0, 0.0) == 0.0
    assert exp_sup_cdf(1.0, -3.0) == 0.0
    assert exp_sup_cdf(2.0, 1.0) == pytest.approx(1.0 - np.exp(-2.0))
    assert np.allclose(exp_sup_cdf(0.5, np.array([0.0, 2.0])), [0.0, 1.0 - np.exp(-1.0)])


def test_laws_reject_nonpositive_lambda():
    with pytest.raises(DomainError):
        exp_sup_cdf(0.0, 1.0)
    with pytest.raises(DomainError):
        argmax_tail(-1.0, 1.0)
    with pytest.raises(DomainError):
        increment_cdf_D(0.0, 1.0, 1.0)


def test_argmax_tail_starts_at_one_and_decreases():
    assert argmax_tail(1.0, 0.0) == pytest.approx(1.0)
    tail = argmax_tail(1.0, np.linspace(0.0, 20.0, 201))
    assert np.all(np.diff(tail) <= 1e-12)
    assert tail[-1] < 1e-3
    with pytest.raises(DomainError):
        argmax_tail(1.0, -0.5)


@pytest.mark.parametrize("lam, t", [(0.5, 0.3), (1.0, 1.0), (2.0, 4.0)])
def test_increment_atom_at_zero_is_argmax_tail(lam, t):
    assert increment_cdf_D(lam, t, 0.0) == pytest.approx(argmax_tail(lam, t), abs=1e-12)


def test_increment_cdf_is_a_cdf():
    z = np.linspace(0.0, 30.0, 301)
    p = increment_cdf_D(1.0, 2.0, z)
    assert np.all(np.diff(p) >= -1e-12)
    assert p[-1] == pytest.approx(1.0, abs=1e-9)
    assert increment_cdf_D(3.0, 1.0, 200.0) == pytest.approx(1.0)


def test_increment_cdf_negative_arguments():
    with pytest.raises(DomainError):
        increment_cdf_D(1.0, 1.0, -0.1)
    assert np.array_equal(increment_cdf_D(1.0, 1.0, np.array([-1.0, -0.1])), [0.0, 0.0])
    with pytest.raises(DomainError):
        increment_cdf_D(1.0, 0.0, 1.0)


# ═══════════════════════════════════════════════════════════════════════════════
# ORACLES
# ═══════════════════════════════════════════════════════════════════════════════

def test_grid_max_shift():
    assert grid_max_shift(0.01) == pytest.approx(0.0824, abs=1e-4)
    assert grid_max_shift(0.01, variance_rate=1.0) == pytest.approx(0.0583, abs=1e-4)


def test_sup_argmax_sample(rng):
    spec = GridSpec(-1.0, 20.0, 0.01)
    sup, argmax, truncated = sup_argmax_sample(1.0, spec, rng)
    assert sup >= 0.0
    assert 0.0 <= argmax <= 20.0 + 1e-9
    assert truncated == (argmax == pytest.approx(20.0))


def test_increment_sample_is_nonnegative(rng):
    spec = GridSpec(-1.0, 20.0, 0.01)
    for _ in range(20):
        value, _ = increment_D_sample(1.0, 1.0, spec, rng)
        assert value >= 0.0


# ═══════════════════════════════════════════════════════════════════════════════
# STATISTICS
# ═══════════════════════════════════════════════════════════════════════════════

def test_reports():
    assert TestReport("ks", 0.02, 0.02, 100).passed
    assert not TestReport("ks", 0.03, 0.02, 100).passed
    assert TestReport("ks", 0.01, 0.02, 100).to_row()["passed"] is True

    a = CheckReport("a")
    a.record(True, 0.1)
    a.record(False, 0.5, level=3)
    b = CheckReport("b", truncated=2)
    b.record(False, 0.2, level=7)
    merged = a.merge(b)
    assert (merged.checked, merged.violations, merged.truncated) == (3, 2, 2)
    assert merged.max_deviation == 0.5
    assert merged.details["first_violation"] == {"level": 3}
    assert not merged.passed


def test_thresholds_scale_with_sample_size():
    assert ks_threshold(100) == pytest.approx(0.163)
    assert ks_threshold(10 ** 6) == 0.02
    assert two_sample_threshold(100) == pytest.approx(1.63 * np.sqrt(0.02))
    assert two_sample_threshold(10 ** 6, 10 ** 6) == 0.05


def test_too_few_samples():
    with pytest.raises(InsufficientDataError):
        ks_report(np.ones(50), exponential_cdf(1.0), 0.1)
    samples = np.r_[np.ones(60), np.full(60, np.nan)]
    with pytest.raises(InsufficientDataError):
        moment_check(samples, 1.0, 1.0)


def test_ks_distance_respects_atoms():
    samples = np.r_[np.zeros(500), (np.arange(500) + 0.5) / 500]

    def cdf(x):
        x = np.asarray(x, dtype=float)
        return np.where(x < 0, 0.0, np.minimum(0.5 + 0.5 * x, 1.0))

    assert ks_distance(samples, cdf) == pytest.approx(0.0005)


def test_ks_report_on_exponential_samples(rng):
    x = rng.exponential(1.0, 5000)
    report = ks_report(x, exponential_cdf(1.0), ks_threshold(len(x)))
    assert report.passed
    assert report.sample_size == 5000
    assert not ks_report(x, exponential_cdf(2.0), ks_threshold(len(x))).passed


def test_two_sample_ks(rng):
    a, b = rng.normal(size=2000), rng.normal(size=2000)
    assert two_sample_ks(a, b, two_sample_threshold(2000)).passed
    assert not two_sample_ks(a, b + 1.0, two_sample_threshold(2000)).passed


def test_moment_and_variance(rng):
    x = rng.normal(2.0, 3.0, 4000)
    assert moment_check(x, 2.0, 9.0).passed
    assert variance_check(x, 9.0).passed
    assert not moment_check(x, 3.0, 9.0).passed


def test_correlation_check(rng):
    a, b = rng.normal(size=1000), rng.normal(size=1000)
    assert correlation_check(a, b).passed
    assert not correlation_check(a, a + 0.1 * b).passed
    with pytest.raises(DomainError):
        correlation_check(a, b[:500])


def test_distance_correlation_sees_nonlinear_dependence(rng):
    x = rng.normal(size=500)
    assert distance_correlation(x, 2.0 * x + 1.0) == pytest.approx(1.0)
    assert abs(np.corrcoef(x, x ** 2)[0, 1]) < 0.2
    assert distance_correlation(x, x ** 2) > 0.3
    assert distance_correlation(x, rng.normal(size=500)) < 4.5 / np.sqrt(500)


def test_tail_report(rng):
    x = rng.exponential(1.0, 3000)
    report = tail_report(x, lambda t: np.exp(-t), [0.5, 1.0, 2.0])
    assert report.passed
    assert report.threshold == ks_threshold(3000)


@pytest.mark.slow
def test_grid_sup_matches_exponential_after_shift():
    spec = GridSpec(-1.0, 20.0, 0.001)
    rng = np.random.default_rng(8)
    sups = np.array([sup_argmax_sample(1.0, spec, rng)[0] for _ in range(2000)])
    shifted = sups + grid_max_shift(spec.step)
    assert ks_report(shifted, exponential_cdf(1.0), ks_threshold(len(sups))).passed
