"""Hierarchical models: constants, density identities and the cross-entropy bracket."""
import math
import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.join(os.path.dirname(__file__), 'modeling'))

from t3vae.errors import ContractError, DomainError
from t3vae.hvae import (
    HierarchicalVAE,
    cross_entropy_bracket,
    hier_constants,
    hier_factorized_log_density,
    hier_joint_log_density,
    hier_loss_coefficients,
    power_integrand_mc,
)
from t3vae.models import HierConfig, ModelConfig
from t3vae.quadrature import integrate_nd
from t3vae.vae import derive_constants, loss_coefficients


def _log_c(nu, d):
    return math.lgamma((nu + d) / 2) - math.lgamma(nu / 2) - d / 2 * math.log(nu * math.pi)


@pytest.mark.parametrize(
    "nu,m1,m2,n,sz,sx",
    [(5.0, 1, 1, 1, 1.0, 1.0), (10.0, 2, 1, 3, 0.7, 1.5), (30.0, 3, 2, 2, 1.2, 0.4)],
)
def test_constants_match_independent_recomputation(nu, m1, m2, n, sz, sx):
    cfg = HierConfig(n=n, m1=m1, m2=m2, nu=nu, sigma_z=sz, sigma_x=sx)
    got = hier_constants(cfg)
    g = -2.0 / (nu + m1 + m2 + n)
    c1 = (
        math.exp(_log_c(nu + m1 + n, m2)) ** g
        * (1 + (m1 + n) / nu) ** (g * m2 / 2)
        * (1 + m2 / (nu + m1 + n - 2))
    ) ** (1 / (1 + g))
    c2 = (math.exp(_log_c(nu, m1 + m2 + n)) * sz ** (-m2) * sx ** (-n)) ** (g / (1 + g)) * (
        1 + (m1 + m2 + n) / (nu - 2)
    ) ** (-g / (1 + g))
    assert got.C1_tilde == pytest.approx(c1, rel=1e-10)
    assert got.C2_tilde == pytest.approx(c2, rel=1e-10)


def test_single_layer_limit_matches_flat_coefficients():
    nu, m, n, sigma = 9.0, 2, 3, 1.3
    hier = HierConfig(n=n, m1=m, m2=0, nu=nu, sigma_x=sigma)
    flat = ModelConfig(n=n, m=m, nu=nu, sigma=sigma)
    hc, fc = hier_constants(hier), derive_constants(flat)
    assert hier.gamma == pytest.approx(flat.gamma)
    assert hc.C2_tilde == pytest.approx(fc.C2, rel=1e-12)
    assert hc.C1_tilde == pytest.approx(1.0)
    level1, _ = hier_loss_coefficients(hier, hc)
    ref = loss_coefficients(flat, fc)
    assert level1.reconstruction == pytest.approx(ref.reconstruction)
    assert level1.mean_sq == pytest.approx(ref.mean_sq)
    assert level1.trace == pytest.approx(ref.trace)


def test_joint_factorizes():
    rng = np.random.default_rng(0)
    for kind, nu in (("t3hvae", 6.0), ("gaussian_hvae", math.inf)):
        cfg = HierConfig(n=2, m1=2, m2=1, nu=nu, sigma_z=0.8, sigma_x=1.3, kind=kind)
        for _ in range(10):
            x, z1, z2 = rng.normal(size=2) * 2, rng.normal(size=2), rng.normal(size=1)
            zeta, mu = rng.normal(size=1), rng.normal(size=2)
            joint = hier_joint_log_density(x, z1, z2, zeta, mu, cfg)
            assert joint == pytest.approx(hier_factorized_log_density(x, z1, z2, zeta, mu, cfg), abs=1e-10)


def test_joint_integrates_to_one_in_three_dimensions():
    cfg = HierConfig(n=1, m1=1, m2=1, nu=6.0, sigma_z=0.9, sigma_x=1.1)

    def density(rows):
        z1, z2, x = rows[:, :1], rows[:, 1:2], rows[:, 2:]
        zeta = 0.5 * z1
        mu = 0.3 * z1 - 0.2 * z2 + 0.1
        return np.exp(np.atleast_1d(hier_joint_log_density(x, z1, z2, zeta, mu, cfg)))

    result = integrate_nd(density, 3)
    assert result.value == pytest.approx(1.0, abs=1e-4)


def test_power_integrand_matches_closed_bracket():
    cfg = HierConfig(n=2, m1=1, m2=1, nu=8.0, sigma_z=0.9, sigma_x=1.1)
    model = HierarchicalVAE(cfg, [3], np.random.default_rng(0))
    x = np.array([0.4, -1.2])
    mc, mc_err = power_integrand_mc(x, model, cfg, 50_000, np.random.default_rng(1))
    closed, closed_err = cross_entropy_bracket(x, model, cfg, 50_000, np.random.default_rng(2))
    assert abs(mc - closed) <= 3 * math.hypot(mc_err, closed_err)


def test_trainable_model_needs_second_layer():
    with pytest.raises(ContractError):
        HierarchicalVAE(HierConfig(n=1, m1=1, m2=0, nu=5.0), [3], np.random.default_rng(0))


def test_config_validation():
    with pytest.raises(DomainError):
        HierConfig(n=1, m1=1, m2=1, nu=2.0)
    with pytest.raises(DomainError):
        hier_constants(HierConfig(n=1, m1=1, m2=1, kind="gaussian_hvae"))


@pytest.mark.parametrize("kind,nu", [("t3hvae", 10.0), ("gaussian_hvae", math.inf)])
def test_generation_and_reconstruction_shapes(kind, nu):
    cfg = HierConfig(n=2, m1=2, m2=1, nu=nu, kind=kind)
    model = HierarchicalVAE(cfg, [4], np.random.default_rng(3))
    assert model.generate(300, np.random.default_rng(4)).shape == (300, 2)
    assert model.reconstruction_mse(np.zeros((5, 2)), np.random.default_rng(5)) >= 0.0
    assert model.generation_prior()["df"] == nu
    state = model.state_dict()
    clone = HierarchicalVAE(cfg, [4], np.random.default_rng(99))
    clone.load_state_dict(state)
    batch = np.random.default_rng(6).normal(size=(4, 2))
    a = model.loss(batch, np.random.default_rng(7)).total.item()
    b = clone.loss(batch, np.random.default_rng(7)).total.item()
    assert a == b


@pytest.mark.parametrize("kind,nu", [("t3hvae", 10.0), ("gaussian_hvae", math.inf)])
def test_sampled_reconstruction(kind, nu):
    cfg = HierConfig(n=2, m1=1, m2=1, nu=nu, kind=kind)
    model = HierarchicalVAE(cfg, [4], np.random.default_rng(8))
    batch = np.random.default_rng(9).normal(size=(6, 2))
    first = model.reconstruct(batch, np.random.default_rng(10))
    assert first.shape == (6, 2) and np.all(np.isfinite(first))
    np.testing.assert_array_equal(first, model.reconstruct(batch, np.random.default_rng(10)))
