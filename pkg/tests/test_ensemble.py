"""
Tests for Monte Carlo ensembles and their statistical tests.
"""

import numpy as np
import pytest

from salemspec import ensemble
from salemspec.iceberg import (TowerSpec, build_tower, cylindric, morse_rotations,
                               random_sign_function)


@pytest.fixture
def binary_tower():
    """Heights 2, 4, 8, 16."""
    return build_tower(TowerSpec(dimension=1, base=2, factors=(2, 2, 2)))


def _assert_same(a: ensemble.EnsembleStats, b: ensemble.EnsembleStats) -> None:
    assert a.replicas == b.replicas
    for name in ('mean', 'power', 'm2', 'power_m2'):
        assert np.array_equal(getattr(a, name), getattr(b, name)), name


def test_determinism(desk_tower) -> None:
    """Tests that identical inputs give bitwise-identical statistics, whatever
    the thread count."""
    f = random_sign_function(desk_tower, 1, 3)
    first = ensemble.run_ensemble(desk_tower, f, 3, 16, 7)
    _assert_same(first, ensemble.run_ensemble(desk_tower, f, 3, 16, 7))
    _assert_same(first, ensemble.run_ensemble(desk_tower, f, 3, 16, 7, threads=4))


def test_merge_halves(desk_tower) -> None:
    """Tests that pooling two halves reproduces the full ensemble exactly."""
    f = random_sign_function(desk_tower, 1, 3)
    full = ensemble.run_ensemble(desk_tower, f, 3, 8, 5)
    low = ensemble.run_ensemble(desk_tower, f, 3, 4, 5)
    high = ensemble.run_ensemble(desk_tower, f, 3, 4, 5, first_replica=4)
    _assert_same(full, low.merge(high))


def test_jensen(desk_tower) -> None:
    """Tests E|R|^2 >= |E R|^2 at every lag."""
    f = random_sign_function(desk_tower, 1, 3)
    stats = ensemble.run_ensemble(desk_tower, f, 4, 16, 2)
    assert ensemble.jensen_gap(stats) >= -ensemble.JENSEN_TOLERANCE
    assert np.allclose(stats.power - np.abs(stats.mean) ** 2,
                       stats.m2 / stats.replicas, atol=1e-12)


def test_scaling(desk_tower) -> None:
    """Tests that 2f scales means by 4 and second moments by 16."""
    f = random_sign_function(desk_tower, 1, 3)
    doubled = cylindric(desk_tower, 1, 2 * f.values)
    base = ensemble.run_ensemble(desk_tower, f, 3, 8, 1)
    scaled = ensemble.run_ensemble(desk_tower, doubled, 3, 8, 1)
    assert np.allclose(scaled.mean, 4 * base.mean, rtol=1e-12, atol=1e-14)
    assert np.allclose(scaled.power, 16 * base.power, rtol=1e-12, atol=1e-14)


def test_errors(desk_tower) -> None:
    """Tests the failure conditions of ensembles."""
    f = random_sign_function(desk_tower, 1, 3)
    with pytest.raises(ensemble.EnsembleError, match='replicas < 2'):
        ensemble.run_ensemble(desk_tower, f, 3, 1, 0)
    with pytest.raises(ensemble.EnsembleError):
        ensemble.run_ensemble(desk_tower, cylindric(desk_tower, 1, [1, 1, 1, 0]), 3, 4, 0)
    with pytest.raises(ensemble.EnsembleError):
        ensemble.run_ensemble(desk_tower, f, 5, 4, 0)
    with pytest.raises(ensemble.EnsembleError):
        ensemble.run_ensemble(desk_tower, f, 3, 4, 0, threads=0)


def test_mean_zero(binary_tower) -> None:
    """Tests that random rotations give zero-mean correlations on Gamma_{n-1}."""
    f = random_sign_function(binary_tower, 1, 7)
    stats = ensemble.run_ensemble(binary_tower, f, 4, 64, 7)
    lags = ensemble.coset_lags(binary_tower, 4)
    assert np.all(np.abs(stats.mean[tuple(lags.T)]) <= 4 / np.sqrt(64))
    report = ensemble.test_mean_zero(stats)
    assert report.passed
    assert report.verdict == 'pass'


def test_mean_zero_fixed_rotations(binary_tower) -> None:
    """Tests that a degenerate ensemble of Morse systems fails."""
    f = cylindric(binary_tower, 1, [1, -1])
    stats = ensemble.run_ensemble(binary_tower, f, 2, 4, 0,
                                  rotations=morse_rotations(binary_tower))
    assert stats.mean[2] == pytest.approx(-1)
    report = ensemble.test_mean_zero(stats)
    assert not report.passed
    assert report.details['max_z'] == np.inf


def test_zero_function(binary_tower) -> None:
    """Tests the trivial verdicts of f = 0."""
    f = cylindric(binary_tower, 1, [0, 0])
    stats = ensemble.run_ensemble(binary_tower, f, 3, 4, 0)
    parent = ensemble.run_ensemble(binary_tower, f, 2, 4, 0)
    assert ensemble.test_mean_zero(stats).passed
    report = ensemble.test_recursion(stats, parent)
    assert report.passed
    assert report.verdict == 'degenerate, vacuous pass'


def test_mean_zero_level_one(binary_tower) -> None:
    """Tests that level 1 has no lags to test."""
    f = random_sign_function(binary_tower, 1, 7)
    stats = ensemble.run_ensemble(binary_tower, f, 1, 4, 7)
    with pytest.raises(ensemble.EnsembleError):
        ensemble.test_mean_zero(stats)
    with pytest.raises(ensemble.EnsembleError, match='range empty'):
        ensemble.test_moment_bound(stats)


def test_recursion() -> None:
    """Tests the second-moment recursion on the tower 4, 16, 96."""
    tower = build_tower(TowerSpec(dimension=1, base=4, factors=(4, 6)))
    f = random_sign_function(tower, 1, 11)
    top = ensemble.run_ensemble(tower, f, 3, 256, 13)
    parent = ensemble.run_ensemble(tower, f, 2, 256, 13)
    report = ensemble.test_recursion(top, parent)
    assert report.passed, report.details
    assert 0.2 / 6 <= report.statistic <= 5 / 6


def test_recursion_mismatch(desk_tower, binary_tower) -> None:
    """Tests that the recursion compares only consecutive levels of one tower."""
    f = random_sign_function(desk_tower, 1, 3)
    g = random_sign_function(binary_tower, 1, 3)
    stats = ensemble.run_ensemble(desk_tower, f, 3, 4, 0)
    with pytest.raises(ensemble.EnsembleError, match='mismatched towers'):
        ensemble.test_recursion(stats, ensemble.run_ensemble(binary_tower, g, 2, 4, 0))
    with pytest.raises(ensemble.EnsembleError):
        ensemble.test_recursion(stats, ensemble.run_ensemble(desk_tower, f, 1, 4, 0))


def test_recursion_warning(desk_tower) -> None:
    """Tests the insufficient-replicas warning on a noisy second moment."""
    f = random_sign_function(desk_tower, 1, 3)
    stats = ensemble.run_ensemble(desk_tower, f, 3, 2, 0)
    parent = ensemble.run_ensemble(desk_tower, f, 2, 2, 0)
    noisy = stats._replace(power=np.ones(stats.power.shape),
                           power_m2=np.full(stats.power.shape, 100.0))
    report = ensemble.test_recursion(noisy, parent)
    assert any('insufficient replicas' in w for w in report.warnings)
    assert report.details['stddev_over_mean'] == pytest.approx(10)

    quiet = noisy._replace(power_m2=np.full(stats.power.shape, 0.25))
    report = ensemble.test_recursion(quiet, parent)
    assert report.details['stddev_over_mean'] == pytest.approx(0.5)
    assert not any('insufficient replicas' in w for w in report.warnings)


def test_white_noise_control(desk_tower) -> None:
    """Tests that the control fails the moment bound and shows no decay."""
    control = ensemble.run_white_noise(desk_tower, 4, 128, 21)
    assert control.source == 'white-noise'
    report = ensemble.test_moment_bound(control)
    assert not report.passed
    assert report.verdict == 'fail'
    assert ensemble.decay_envelope_fit(control).kappa_hat > -0.15


def test_decay_envelope_normalized(desk_tower) -> None:
    """Tests the envelope slope of E|R(t)|^2 = 2^{n(t)} / t with and without
    the level normalization."""
    f = random_sign_function(desk_tower, 1, 3)
    stats = ensemble.run_ensemble(desk_tower, f, 4, 2, 0)
    radii = np.minimum(np.arange(960), 960 - np.arange(960))
    scale = np.array([2.0 ** desk_tower.level_of_lag(int(r)) for r in radii])
    moments = stats._replace(power=scale / np.maximum(radii, 1))
    raw = ensemble.decay_envelope_fit(moments).kappa_hat
    normalized = ensemble.decay_envelope_fit(moments, normalized=True).kappa_hat
    assert normalized == pytest.approx(-0.5, abs=0.05)
    assert raw == pytest.approx(-0.3, abs=0.05)


def test_second_moment_norms(binary_tower) -> None:
    """Tests both readings of the second-moment norm."""
    f = random_sign_function(binary_tower, 1, 7)
    stats = ensemble.run_ensemble(binary_tower, f, 3, 4, 1)
    norms = ensemble.second_moment_norms(stats)
    assert norms.total == pytest.approx(float(stats.power.sum()))
    assert norms.normalized == pytest.approx(norms.total / 8)
    assert norms.total >= 1
