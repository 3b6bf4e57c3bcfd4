"""Gamma-power divergence: closed forms against the quadrature oracle, limits and axioms."""
import math
import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.join(os.path.dirname(__file__), 'modeling'))

from t3vae.divergence import (
    Domain,
    GammaIndex,
    first_order_gap,
    gamma_cross_entropy_numeric,
    gamma_cross_entropy_t,
    gamma_divergence_numeric,
    gamma_divergence_tt,
    gamma_entropy_numeric,
    gamma_entropy_t,
    gamma_for,
    kl_gaussian,
    kl_numeric,
)
from t3vae.errors import ContractError, DomainError, MomentUndefinedError
from t3vae.models import GaussianParams, TParams
from t3vae.tdist import gaussian_log_density, log_density


def _logpdf(p):
    return lambda rows: np.atleast_1d(log_density(rows, p))


def _random_pair(rng, d, nu):
    mu_q, mu_p = rng.uniform(-2, 2, size=d), rng.uniform(-2, 2, size=d)
    s_q, s_p = rng.uniform(0.5, 2.0, size=d), rng.uniform(0.5, 2.0, size=d)
    return TParams(mu_q, s_q, nu), TParams(mu_p, s_p, nu)


def test_closed_form_matches_oracle_1d():
    rng = np.random.default_rng(0)
    for i in range(20):
        nu = (5.0, 10.0, 30.0)[i % 3]
        q, p = _random_pair(rng, 1, nu)
        g = gamma_for(nu, 1)
        oracle = gamma_divergence_numeric(_logpdf(q), _logpdf(p), g, Domain.around([q, p]))
        closed = gamma_divergence_tt(q, p)
        assert abs(closed - oracle.value) <= 1e-6 * abs(oracle.value), (nu, closed, oracle)


def test_closed_form_matches_oracle_2d():
    rng = np.random.default_rng(1)
    for i in range(5):
        nu = (5.0, 10.0, 30.0)[i % 3]
        q, p = _random_pair(rng, 2, nu)
        g = gamma_for(nu, 2)
        oracle = gamma_divergence_numeric(_logpdf(q), _logpdf(p), g, Domain.around([q, p]))
        closed = gamma_divergence_tt(q, p)
        assert abs(closed - oracle.value) <= 1e-6 * abs(oracle.value), (nu, closed, oracle)


def test_entropy_and_cross_entropy_match_oracle():
    q = TParams([0.4], [1.3], 7.0)
    p = TParams([-1.0], [0.6], 7.0)
    g = gamma_for(7.0, 1)
    dom = Domain.around([q, p])
    assert gamma_entropy_t(q) == pytest.approx(gamma_entropy_numeric(_logpdf(q), g, dom).value, rel=1e-9)
    assert gamma_cross_entropy_t(q, p) == pytest.approx(
        gamma_cross_entropy_numeric(_logpdf(q), _logpdf(p), g, dom).value, rel=1e-9
    )


def test_full_scale_matches_oracle_2d():
    q = TParams([0.5, -0.5], [[1.0, 0.4], [0.4, 0.8]], 6.0)
    p = TParams([0.0, 1.0], [[2.0, -0.3], [-0.3, 1.0]], 6.0)
    oracle = gamma_divergence_numeric(_logpdf(q), _logpdf(p), gamma_for(6.0, 2), Domain.around([q, p]))
    assert gamma_divergence_tt(q, p) == pytest.approx(oracle.value, rel=1e-6)


def test_converges_to_gaussian_kl():
    kl = kl_gaussian(GaussianParams([0.0], [1.0]), GaussianParams([1.0], [2.0]))
    assert kl == pytest.approx(0.5 * math.log(2.0), rel=1e-12)
    gaps = []
    for nu in (1e2, 1e3, 1e4, 1e5, 1e6):
        d = gamma_divergence_tt(TParams([0.0], [1.0], nu), TParams([1.0], [2.0], nu))
        gaps.append(abs(d - kl))
    assert all(b < a for a, b in zip(gaps, gaps[1:])), gaps
    assert gaps[-1] < 1e-3


def _random_t(rng, d, nu):
    a = rng.normal(size=(d, d))
    scale = a @ a.T + 0.1 * np.eye(d)
    return TParams(rng.normal(size=d) * 2, 0.5 * (scale + scale.T), nu)


def test_divergence_axioms():
    rng = np.random.default_rng(2)
    for _ in range(1000):
        d = int(rng.integers(1, 4))
        nu = float(rng.uniform(2.5, 50.0))
        q, p = _random_t(rng, d, nu), _random_t(rng, d, nu)
        assert gamma_divergence_tt(q, p) >= -1e-12
        assert gamma_divergence_tt(q, p) > 0
        assert abs(gamma_divergence_tt(q, q)) <= 1e-10


def test_mismatched_pairs_rejected():
    with pytest.raises(ContractError):
        gamma_divergence_tt(TParams([0.0], [1.0], 5.0), TParams([0.0, 0.0], 1.0, 5.0))
    with pytest.raises(ContractError):
        gamma_divergence_tt(TParams([0.0], [1.0], 5.0), TParams([0.0], [1.0], 6.0))


def test_moments_required():
    with pytest.raises(MomentUndefinedError):
        gamma_entropy_t(TParams([0.0], [1.0], 2.0))
    with pytest.raises(DomainError):
        gamma_for(2.0, 1)


def test_gamma_index_domain():
    assert float(GammaIndex(-0.5)) == -0.5
    for bad in (0.0, -1.0, -2.0, float("nan")):
        with pytest.raises(DomainError):
            GammaIndex(bad)
    assert float(gamma_for(10.0, 2)) == pytest.approx(-2.0 / 12.0)


def test_kl_numeric_matches_closed_form():
    q, p = GaussianParams([0.3], [0.8]), GaussianParams([-0.5], [1.7])

    def lq(rows):
        return np.atleast_1d(gaussian_log_density(rows, q))

    def lp(rows):
        return np.atleast_1d(gaussian_log_density(rows, p))

    oracle = kl_numeric(lq, lp, Domain(dim=1, center=(0.3, -0.5)))
    assert oracle.value == pytest.approx(kl_gaussian(q, p), rel=1e-9)


@pytest.mark.parametrize(
    "logpdf,sigma_fn",
    [
        (lambda x: np.atleast_1d(gaussian_log_density(x, GaussianParams([0.0], [1.0]))), None),
        (lambda x: np.atleast_1d(log_density(x, TParams([0.0], [1.0], 10.0))), None),
        (
            lambda x: np.atleast_1d(gaussian_log_density(x, GaussianParams([0.5], [2.0]))),
            lambda x: 1.0 + x[:, 0] ** 2 / 5.0,
        ),
    ],
)
def test_first_order_gap_is_second_order(logpdf, sigma_fn):
    g = -0.02
    ratio = first_order_gap(logpdf, g, sigma_fn) / first_order_gap(logpdf, g / 2, sigma_fn)
    assert 3.5 <= ratio <= 4.5


@pytest.mark.parametrize("g", [-0.1, -0.05])
def test_first_order_gap_ratio_for_moderate_gamma(g):
    logpdf = _logpdf(TParams([0.0], [1.0], 10.0))
    ratio = first_order_gap(logpdf, g) / first_order_gap(logpdf, g / 2)
    assert 3.5 <= ratio <= 4.5
