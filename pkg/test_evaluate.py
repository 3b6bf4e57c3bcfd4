"""MMD tests, tail filters and histograms."""
import math
import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.join(os.path.dirname(__file__), 'modeling'))

from t3vae.errors import ContractError, DomainError
from t3vae.evaluate import (
    TailSpec,
    log_histogram,
    mmd_linear_test,
    reconstruction_report,
    region_spec,
    run_region_tests,
    tail_filter,
)
from t3vae.models import ModelConfig
from t3vae.vae import VAE


def test_right_region_on_line_keeps_values_above_six():
    batch = np.array([[-8.0], [-6.5], [0.0], [5.9], [6.0], [6.1], [12.0]])
    right = tail_filter(batch, region_spec("right", 1))
    np.testing.assert_array_equal(right[:, 0], [6.1, 12.0])
    left = tail_filter(batch, region_spec("left", 1))
    np.testing.assert_array_equal(left[:, 0], [-8.0, -6.5])
    both = tail_filter(batch, region_spec("tails", 1))
    assert both.shape[0] == 4
    assert tail_filter(batch, region_spec("full", 1)).shape[0] == batch.shape[0]


def test_radius_region_in_plane():
    batch = np.array([[9.0, 0.0], [8.0, 7.0], [-8.0, -7.0], [0.0, -11.0]])
    spec = region_spec("right", 2)
    assert spec == TailSpec("radius_gt", 10.0, "right")
    np.testing.assert_array_equal(tail_filter(batch, spec), [[8.0, 7.0]])
    assert tail_filter(batch, region_spec("tails", 2)).shape[0] == 3


def test_region_validation():
    with pytest.raises(DomainError):
        region_spec("middle", 1)
    with pytest.raises(DomainError):
        region_spec("left", 3)
    with pytest.raises(DomainError):
        TailSpec("box", 1.0)


def test_identical_samples_give_zero_statistic():
    a = np.random.default_rng(0).normal(size=(2000, 1))
    report = mmd_linear_test(a, a.copy(), n_bootstrap=200, rng=np.random.default_rng(1))
    assert report.statistic == pytest.approx(0.0, abs=1e-12)
    assert report.p_value > 0.05
    assert report.n_samples == 2000 and not report.empty


def test_shifted_samples_rejected():
    rng = np.random.default_rng(2)
    a = rng.normal(size=(4000, 2))
    b = rng.normal(size=(4000, 2)) + 2.0
    report = mmd_linear_test(a, b, n_bootstrap=200, rng=np.random.default_rng(3))
    assert report.statistic > 0
    assert report.p_value < 0.05


def test_same_distribution_not_rejected_often():
    rejections = 0
    for seed in range(10):
        rng = np.random.default_rng(seed)
        report = mmd_linear_test(rng.normal(size=1000), rng.normal(size=1000), n_bootstrap=100, rng=rng)
        rejections += report.p_value < 0.01
    assert rejections <= 2


def test_mmd_contract():
    with pytest.raises(ContractError):
        mmd_linear_test(np.zeros((10, 1)), np.zeros((10, 2)))
    with pytest.raises(ContractError):
        mmd_linear_test(np.zeros((2, 1)), np.zeros((10, 1)))
    with pytest.raises(ContractError):
        mmd_linear_test(np.zeros((10, 1)), np.zeros((10, 1)), n_bootstrap=0)


def test_empty_tail_region_is_flagged():
    rng = np.random.default_rng(4)
    gen, ref = rng.normal(size=(500, 1)), rng.normal(size=(500, 1))
    reports = run_region_tests(gen, ref, ("full", "left", "right"), n_bootstrap=50, seed=0)
    assert [r.region for r in reports] == ["full", "left", "right"]
    assert not reports[0].empty and reports[0].p_value is not None
    for r in reports[1:]:
        assert r.empty and r.statistic is None and r.p_value is None
    assert reports[1].to_dict()["empty"] is True


def test_region_tests_deterministic_for_seed():
    rng = np.random.default_rng(5)
    gen, ref = rng.standard_t(3, size=(3000, 1)) * 3, rng.standard_t(3, size=(3000, 1)) * 3
    first = run_region_tests(gen, ref, n_bootstrap=50, seed=9)
    second = run_region_tests(gen, ref, n_bootstrap=50, seed=9)
    assert [r.to_dict() for r in first] == [r.to_dict() for r in second]


def test_log_histogram_accounts_for_every_row():
    x = np.concatenate([np.linspace(0.05, 0.95, 10), [-1.0, 2.0, 3.0]])
    table = log_histogram(x, bins=4, range=(0.0, 1.0))
    assert table.underflow == 1 and table.overflow == 2
    assert table.total == 13
    np.testing.assert_allclose(table.centers, [0.125, 0.375, 0.625, 0.875])
    counts = table.counts
    expected = np.log10(counts / (13 * 0.25))
    np.testing.assert_allclose(table.log10_density, expected)
    rows = table.rows()
    assert rows[0][0] == 0.125 and isinstance(rows[0][1], int)


def test_log_histogram_empty_bins_are_minus_infinity():
    table = log_histogram(np.array([0.1, 0.2, 0.9]), bins=5, range=(0.0, 1.0))
    assert math.isinf(table.log10_density[2]) and table.log10_density[2] < 0
    with pytest.raises(DomainError):
        log_histogram(np.zeros(3), bins=1)


def test_reconstruction_report():
    model = VAE(ModelConfig(n=1, m=1, nu=10.0), [4], np.random.default_rng(0))
    report = reconstruction_report(model, np.zeros((20, 1)), np.random.default_rng(1))
    assert report["rows"] == 20
    assert report["recon_rmse"] == pytest.approx(math.sqrt(report["recon_mse"]))


def test_mmd_p_value_falls_as_samples_separate():
    means = []
    for shift in (0.0, 1.0, 2.0, 3.0):
        ps = []
        for seed in range(5):
            rng = np.random.default_rng(100 + seed)
            a, b = rng.normal(size=(400, 1)), rng.normal(size=(400, 1)) + shift
            ps.append(mmd_linear_test(a, b, n_bootstrap=200, rng=rng).p_value)
        means.append(float(np.mean(ps)))
    assert means[0] > 0.05
    assert np.all(np.diff(means) <= 1e-12)
    assert means[-1] < 0.01


def test_mmd_rejection_rate_under_the_null():
    rejected = 0
    trials = 400
    for seed in range(trials):
        rng = np.random.default_rng(1000 + seed)
        report = mmd_linear_test(rng.normal(size=200), rng.normal(size=200), n_bootstrap=100, rng=rng)
        rejected += report.p_value < 0.05
    assert 0.02 <= rejected / trials <= 0.10


@pytest.mark.parametrize("range_", [None, (-5.0, 5.0)])
def test_log_histogram_of_empty_batch(range_):
    table = log_histogram(np.array([]), bins=4, range=range_)
    assert table.total == 0
    assert table.counts.shape == (4,)
    assert np.all(np.isneginf(table.log10_density))


def test_reconstruction_report_includes_sampled_error():
    model = VAE(ModelConfig(n=2, m=1, kind="gaussian_vae", sigma=0.5), [4], np.random.default_rng(0))
    batch = np.random.default_rng(2).normal(size=(50, 2))
    report = reconstruction_report(model, batch, np.random.default_rng(1))
    assert math.isfinite(report["sampled_mse"]) and report["sampled_mse"] > 0
    with pytest.raises(ContractError):
        reconstruction_report(model, np.zeros((0, 2)), np.random.default_rng(1))
