"""Two-level hierarchical models: t3HVAE and the Gaussian HVAE baseline.

Generative side:

    z1      ~ t_m1(0, I, nu)
    z2 | z1 ~ t_m2(zeta_theta(z1), (1+|z1|^2/nu)/(1+m1/nu) sigma_z^2 I, nu+m1)
    x | z   ~ t_n(mu_theta(z1, z2), s(z1, z2) sigma_x^2 I, nu+m1+m2)

whose product is one power form in (x, z1, z2). The encoders are
t_m1(zeta_phi(x), (1+n/nu)^-1 Lambda_phi(x), nu+n) and
t_m2(mu_phi(x, z1), (1+(m1+n)/nu)^-1 Sigma_phi(x, z1), nu+m1+n).
"""
from __future__ import annotations

import math
from typing import Dict, List, Sequence

import numpy as np
from loguru import logger

from .autodiff import Tensor, concat
from .errors import ContractError, DomainError
from .models import GaussianParams, HierConfig, HierConstants, HierEncoderOutput, LossCoefficients, LossTerms, TParams
from .nn import MlpNet, reparam_gaussian, reparam_t
from .tdist import _log_c, gaussian_log_density, log_density
from .vae import _finish, _values


def hier_constants(cfg: HierConfig) -> HierConstants:
    if not cfg.heavy_tailed:
        raise DomainError(f"constants are defined for t3hvae only, got {cfg.kind}")
    nu, m1, m2, n = cfg.nu, cfg.m1, cfg.m2, cfg.n
    if not nu > 2:
        raise DomainError(f"nu must be > 2, got {nu}")
    g = cfg.gamma
    log_c1 = (
        g / (1 + g) * _log_c(nu + m1 + n, m2)
        + g * m2 / (2 * (1 + g)) * math.log1p((m1 + n) / nu)
        + 1 / (1 + g) * math.log1p(m2 / (nu + m1 + n - 2))
    )
    log_c2 = (
        (g * _log_c(nu, m1 + m2 + n) - g * m2 * math.log(cfg.sigma_z) - g * n * math.log(cfg.sigma_x)) / (1 + g)
        - g / (1 + g) * math.log1p((m1 + m2 + n) / (nu - 2))
    )
    return HierConstants(C1_tilde=math.exp(log_c1), C2_tilde=math.exp(log_c2))


def hier_loss_coefficients(cfg: HierConfig, constants: HierConstants) -> tuple[LossCoefficients, LossCoefficients]:
    """(level-1, level-2) multipliers inside the 1/2 * E_x[...] bracket of the hierarchical gamma-loss."""
    nu, m1, n = cfg.nu, cfg.m1, cfg.n
    ratio = constants.C1_tilde / constants.C2_tilde
    level1 = LossCoefficients(
        reconstruction=1.0 / cfg.sigma_x**2,
        mean_sq=1.0,
        trace=nu / (nu + n - 2),
        det_power=0.0,
        log_det=cfg.gamma * nu * ratio / 2.0,
    )
    level2 = LossCoefficients(
        reconstruction=0.0,
        mean_sq=1.0 / cfg.sigma_z**2,
        trace=nu / ((nu + m1 + n - 2) * cfg.sigma_z**2),
        det_power=-nu * ratio,
    )
    return level1, level2


# -- distributions -------------------------------------------------------------


def _sq(a: np.ndarray) -> np.ndarray:
    return np.sum(a * a, axis=-1)


def conditional_prior_params(z1, zeta_theta, cfg: HierConfig):
    z1 = np.atleast_1d(np.asarray(z1, dtype=np.float64))
    zeta = np.atleast_1d(np.asarray(zeta_theta, dtype=np.float64))
    if cfg.heavy_tailed:
        factor = (1.0 + float(_sq(z1)) / cfg.nu) / (1.0 + cfg.m1 / cfg.nu)
        return TParams(zeta, factor * cfg.sigma_z**2, cfg.nu + cfg.m1)
    return GaussianParams(zeta, cfg.sigma_z**2)


def hier_decoder_params(z1, z2, zeta_theta, mu_theta, cfg: HierConfig):
    z1 = np.atleast_1d(np.asarray(z1, dtype=np.float64))
    mu = np.atleast_1d(np.asarray(mu_theta, dtype=np.float64))
    if cfg.heavy_tailed:
        dev = float(_sq(np.asarray(z2, dtype=np.float64) - np.asarray(zeta_theta, dtype=np.float64))) if cfg.m2 else 0.0
        factor = (1.0 + float(_sq(z1)) / cfg.nu + dev / (cfg.nu * cfg.sigma_z**2)) / (1.0 + (cfg.m1 + cfg.m2) / cfg.nu)
        return TParams(mu, factor * cfg.sigma_x**2, cfg.nu + cfg.m1 + cfg.m2)
    return GaussianParams(mu, cfg.sigma_x**2)


def hier_joint_log_density(x, z1, z2, zeta_theta, mu_theta, cfg: HierConfig):
    """Closed power form of log p(x, z1, z2); rows are points."""
    x, z1, z2, zeta, mu = (np.atleast_2d(np.asarray(a, dtype=np.float64)) for a in (x, z1, z2, zeta_theta, mu_theta))
    nu, m1, m2, n = cfg.nu, cfg.m1, cfg.m2, cfg.n
    q = _sq(z1) + _sq(z2 - zeta) / cfg.sigma_z**2 + _sq(x - mu) / cfg.sigma_x**2
    if cfg.heavy_tailed:
        out = (
            _log_c(nu, m1 + m2 + n)
            - m2 * math.log(cfg.sigma_z)
            - n * math.log(cfg.sigma_x)
            - 0.5 * (nu + m1 + m2 + n) * np.log1p(q / nu)
        )
    else:
        out = -0.5 * (m1 + m2 + n) * math.log(2 * math.pi) - m2 * math.log(cfg.sigma_z) - n * math.log(cfg.sigma_x) - 0.5 * q
    return float(out[0]) if out.size == 1 else out


def hier_factorized_log_density(x, z1, z2, zeta_theta, mu_theta, cfg: HierConfig) -> float:
    """log p(z1) + log p(z2 | z1) + log p(x | z1, z2) at a single point."""
    logpdf = log_density if cfg.heavy_tailed else gaussian_log_density
    z1 = np.atleast_1d(np.asarray(z1, dtype=np.float64))
    prior = TParams(np.zeros(cfg.m1), 1.0, cfg.nu) if cfg.heavy_tailed else GaussianParams(np.zeros(cfg.m1), 1.0)
    total = logpdf(z1, prior)
    if cfg.m2:
        total += logpdf(z2, conditional_prior_params(z1, zeta_theta, cfg))
    total += logpdf(x, hier_decoder_params(z1, z2, zeta_theta, mu_theta, cfg))
    return total


# -- model ---------------------------------------------------------------------


class HierarchicalVAE:
    """encoder1 x -> (zeta_phi, log lambda_phi); encoder2 [x, z1] -> (mu_phi, log sigma_phi);
    prior net z1 -> zeta_theta; decoder [z1, z2] -> mu_theta."""

    def __init__(self, cfg: HierConfig, hidden_sizes: Sequence[int], rng: np.random.Generator):
        if cfg.m2 < 1:
            raise ContractError("a trainable hierarchical model needs m2 >= 1")
        self.cfg = cfg
        self.hidden_sizes = list(hidden_sizes)
        self.constants = hier_constants(cfg) if cfg.heavy_tailed else None
        h = self.hidden_sizes
        self.encoder1 = MlpNet([cfg.n, *h, 2 * cfg.m1], rng)
        self.encoder2 = MlpNet([cfg.n + cfg.m1, *h, 2 * cfg.m2], rng)
        self.prior_net = MlpNet([cfg.m1, *h, cfg.m2], rng)
        self.decoder = MlpNet([cfg.m1 + cfg.m2, *h, cfg.n], rng)
        if self.constants is not None:
            logger.debug(f"t3hvae constants: C1~={self.constants.C1_tilde:.6g} C2~={self.constants.C2_tilde:.6g}")

    def nets(self) -> Dict[str, MlpNet]:
        return {"encoder1": self.encoder1, "encoder2": self.encoder2, "prior_net": self.prior_net, "decoder": self.decoder}

    def encode_level1(self, x: Tensor) -> tuple[Tensor, Tensor]:
        h = self.encoder1(x)
        return h[:, : self.cfg.m1], h[:, self.cfg.m1 :]

    def encode_level2(self, x: Tensor, z1: Tensor) -> tuple[Tensor, Tensor]:
        h = self.encoder2(concat([x, z1], axis=1))
        return h[:, : self.cfg.m2], h[:, self.cfg.m2 :]

    def sample_level1(self, zeta: Tensor, log_lam: Tensor, rng: np.random.Generator) -> Tensor:
        if self.cfg.heavy_tailed:
            return reparam_t(zeta, log_lam, self.cfg.nu, self.cfg.n, rng)
        return reparam_gaussian(zeta, log_lam, rng)

    def sample_level2(self, mu: Tensor, log_sigma: Tensor, rng: np.random.Generator) -> Tensor:
        if self.cfg.heavy_tailed:
            return reparam_t(mu, log_sigma, self.cfg.nu, self.cfg.m1 + self.cfg.n, rng)
        return reparam_gaussian(mu, log_sigma, rng)

    def encode(self, batch, rng: np.random.Generator) -> tuple[HierEncoderOutput, Tensor, Tensor]:
        """One nested draw: returns encoder outputs (level 2 at the drawn z1), z1 and z2."""
        x = Tensor(np.asarray(batch, dtype=np.float64))
        zeta, log_lam = self.encode_level1(x)
        z1 = self.sample_level1(zeta, log_lam, rng)
        mu, log_sigma = self.encode_level2(x, z1)
        z2 = self.sample_level2(mu, log_sigma, rng)
        return HierEncoderOutput(zeta, log_lam, mu, log_sigma), z1, z2

    def decode(self, z1: Tensor, z2: Tensor) -> Tensor:
        return self.decoder(concat([z1, z2], axis=1))

    def loss(self, batch, rng: np.random.Generator, batch_index: int | None = None) -> LossTerms:
        if self.cfg.heavy_tailed:
            return hier_gamma_loss(batch, self, self.cfg, self.constants, rng, batch_index=batch_index)
        return hier_elbo_loss(batch, self, self.cfg, rng, batch_index=batch_index)

    def generate(self, count: int, rng: np.random.Generator) -> np.ndarray:
        return hier_generate(count, self, self.cfg, rng)

    def generation_prior(self) -> Dict[str, float]:
        return {"df": self.cfg.nu if self.cfg.heavy_tailed else math.inf, "scale": 1.0}

    def reconstruct(self, batch, rng: np.random.Generator) -> np.ndarray:
        """Nested encoder draw of (z1, z2), then x from the decoder distribution."""
        x = np.asarray(batch, dtype=np.float64)
        _, z1, z2 = self.encode(x, rng)
        z1, z2 = _values(z1), _values(z2)
        zeta = _values(self.prior_net(Tensor(z1)))
        return hier_decoder_sample(z1, z2, zeta, _values(self.decode(Tensor(z1), Tensor(z2))), self.cfg, rng)

    def reconstruction_mse(self, batch, rng: np.random.Generator) -> float:
        x = np.asarray(batch, dtype=np.float64)
        _, z1, z2 = self.encode(x, rng)
        return float(np.mean(_sq(x - _values(self.decode(z1, z2)))))

    def parameters(self) -> List[Tensor]:
        out: List[Tensor] = []
        for net in self.nets().values():
            out.extend(net.parameters())
        return out

    def state_dict(self) -> Dict[str, np.ndarray]:
        state = {}
        for name, net in self.nets().items():
            state.update({f"{name}.{k}": v for k, v in net.state_dict().items()})
        return state

    def load_state_dict(self, state: Dict[str, np.ndarray]) -> None:
        for name, net in self.nets().items():
            prefix = f"{name}."
            net.load_state_dict({k[len(prefix):]: v for k, v in state.items() if k.startswith(prefix)})


# -- losses --------------------------------------------------------------------


def hier_gamma_loss(
    batch,
    model: HierarchicalVAE,
    cfg: HierConfig,
    constants: HierConstants,
    rng: np.random.Generator,
    mc_samples: int | None = None,
    batch_index: int | None = None,
) -> LossTerms:
    if not cfg.heavy_tailed:
        raise DomainError(f"hier_gamma_loss needs a t3hvae config, got {cfg.kind}")
    x_np = np.asarray(batch, dtype=np.float64)
    x = Tensor(x_np)
    L = mc_samples or cfg.mc_samples
    c1, c2 = hier_loss_coefficients(cfg, constants)
    g = cfg.gamma

    zeta, log_lam = model.encode_level1(x)
    level1 = (
        zeta.square().sum(axis=1) * c1.mean_sq
        + (log_lam * 2.0).exp().sum(axis=1) * c1.trace
        + log_lam.sum(axis=1) * (2.0 * c1.log_det)
    )
    recon = None
    level2 = None
    for _ in range(L):
        z1 = model.sample_level1(zeta, log_lam, rng)
        mu, log_sigma = model.encode_level2(x, z1)
        z2 = model.sample_level2(mu, log_sigma, rng)
        sq = (model.decode(z1, z2) - x_np).square().sum(axis=1)
        reg2 = (
            (mu - model.prior_net(z1)).square().sum(axis=1) * c2.mean_sq
            + (log_sigma * 2.0).exp().sum(axis=1) * c2.trace
            + (log_sigma.sum(axis=1) * (-g / (1 + g))).exp() * c2.det_power
        )
        recon = sq if recon is None else recon + sq
        level2 = reg2 if level2 is None else level2 + reg2
    recon = recon * (1.0 / L)
    level2 = level2 * (1.0 / L)
    reg = level1 + level2
    total = (recon * c1.reconstruction + reg).mean() * 0.5
    return _finish(
        total,
        0.5 * c1.reconstruction * float(np.mean(recon.value)),
        0.5 * float(np.mean(reg.value)),
        batch_index,
    )


def _kl_diag_vs_iso(mu: Tensor, log_sigma: Tensor, center, scale: float) -> Tensor:
    """Per-row KL(N(mu, diag sigma^2) || N(center, scale^2 I))."""
    var = (log_sigma * 2.0).exp()
    dev = (mu - center).square()
    terms = (var + dev) * (1.0 / scale**2) - 1.0 - log_sigma * 2.0 + 2.0 * math.log(scale)
    return terms.sum(axis=1) * 0.5


def hier_elbo_loss(
    batch,
    model: HierarchicalVAE,
    cfg: HierConfig,
    rng: np.random.Generator,
    mc_samples: int | None = None,
    batch_index: int | None = None,
) -> LossTerms:
    """Two-level negative ELBO: reconstruction + KL(q(z1|x) || N(0, I)) + E_z1 KL(q(z2|x,z1) || p(z2|z1))."""
    if cfg.heavy_tailed:
        raise DomainError("hier_elbo_loss is for the Gaussian HVAE")
    x_np = np.asarray(batch, dtype=np.float64)
    x = Tensor(x_np)
    L = mc_samples or cfg.mc_samples
    zeta, log_lam = model.encode_level1(x)
    kl1 = _kl_diag_vs_iso(zeta, log_lam, 0.0, 1.0)
    recon = None
    kl2 = None
    for _ in range(L):
        z1 = model.sample_level1(zeta, log_lam, rng)
        mu, log_sigma = model.encode_level2(x, z1)
        z2 = model.sample_level2(mu, log_sigma, rng)
        sq = (model.decode(z1, z2) - x_np).square().sum(axis=1)
        k = _kl_diag_vs_iso(mu, log_sigma, model.prior_net(z1), cfg.sigma_z)
        recon = sq if recon is None else recon + sq
        kl2 = k if kl2 is None else kl2 + k
    scale = 0.5 / cfg.sigma_x**2
    recon = recon * (scale / L)
    reg = kl1 + kl2 * (1.0 / L)
    total = (recon + reg).mean()
    return _finish(total, float(np.mean(recon.value)), float(np.mean(reg.value)), batch_index)


# -- generation and consistency checks ---------------------------------------------


def hier_generate(count: int, model: HierarchicalVAE, cfg: HierConfig, rng: np.random.Generator) -> np.ndarray:
    """z1 from the prior, z2 from the conditional prior, x from the decoder distribution."""
    if count < 1:
        raise ContractError(f"count must be >= 1, got {count}")
    nu, m1, m2 = cfg.nu, cfg.m1, cfg.m2
    if cfg.heavy_tailed:
        z1 = rng.standard_normal((count, m1)) / np.sqrt(rng.chisquare(nu, size=(count, 1)) / nu)
        zeta = _values(model.prior_net(Tensor(z1)))
        f2 = (1.0 + _sq(z1)[:, None] / nu) / (1.0 + m1 / nu)
        df2 = nu + m1
        z2 = zeta + np.sqrt(f2) * cfg.sigma_z * rng.standard_normal((count, m2)) / np.sqrt(
            rng.chisquare(df2, size=(count, 1)) / df2
        )
    else:
        z1 = rng.standard_normal((count, m1))
        zeta = _values(model.prior_net(Tensor(z1)))
        z2 = zeta + cfg.sigma_z * rng.standard_normal((count, m2))
    return hier_decoder_sample(z1, z2, zeta, _values(model.decode(Tensor(z1), Tensor(z2))), cfg, rng)


def hier_decoder_sample(z1, z2, zeta, mu, cfg: HierConfig, rng: np.random.Generator) -> np.ndarray:
    """One draw of x per row from hier_decoder_params, vectorised over rows."""
    eps = rng.standard_normal(mu.shape)
    if not cfg.heavy_tailed:
        return mu + cfg.sigma_x * eps
    nu = cfg.nu
    f3 = (1.0 + _sq(z1)[:, None] / nu + _sq(z2 - zeta)[:, None] / (nu * cfg.sigma_z**2)) / (1.0 + (cfg.m1 + cfg.m2) / nu)
    df3 = nu + cfg.m1 + cfg.m2
    return mu + np.sqrt(f3) * cfg.sigma_x * eps / np.sqrt(rng.chisquare(df3, size=(mu.shape[0], 1)) / df3)


def _power_prefactor(cfg: HierConfig) -> float:
    """log of C_{nu,m1+m2+n}^g sigma_z^(-g m2) sigma_x^(-g n)."""
    g = cfg.gamma
    return g * (_log_c(cfg.nu, cfg.m1 + cfg.m2 + cfg.n) - cfg.m2 * math.log(cfg.sigma_z) - cfg.n * math.log(cfg.sigma_x))


def power_integrand_mc(
    x, model: HierarchicalVAE, cfg: HierConfig, draws: int, rng: np.random.Generator
) -> tuple[float, float]:
    """E over z1, z2 ~ q(.|x) of p(x, z1, z2)^g / (prefactor), from the joint density; (mean, stderr)."""
    xs = np.repeat(np.atleast_2d(np.asarray(x, dtype=np.float64)), draws, axis=0)
    _, z1, z2 = model.encode(xs, rng)
    z1v, z2v = _values(z1), _values(z2)
    zeta = _values(model.prior_net(Tensor(z1v)))
    mu = _values(model.decode(Tensor(z1v), Tensor(z2v)))
    logp = np.atleast_1d(hier_joint_log_density(xs, z1v, z2v, zeta, mu, cfg))
    vals = np.exp(cfg.gamma * logp - _power_prefactor(cfg))
    return float(vals.mean()), float(vals.std(ddof=1) / math.sqrt(draws))


def cross_entropy_bracket(
    x, model: HierarchicalVAE, cfg: HierConfig, draws: int, rng: np.random.Generator
) -> tuple[float, float]:
    """The bracket of the hierarchical cross-entropy with the |z1|^2 and z2 expectations in closed form.

    The remaining z1 expectation (and the reconstruction term) is averaged over
    `draws` samples; returns (mean, stderr).
    """
    nu, m1, n = cfg.nu, cfg.m1, cfg.n
    xs = np.repeat(np.atleast_2d(np.asarray(x, dtype=np.float64)), draws, axis=0)
    out, z1, z2 = model.encode(xs, rng)
    zeta_phi, lam2 = _values(out.zeta_phi)[0], np.exp(2.0 * _values(out.log_lambda_phi)[0])
    level1 = (float(zeta_phi @ zeta_phi) + nu / (nu + n - 2) * float(np.sum(lam2))) / nu
    zeta_theta = _values(model.prior_net(z1))
    inner = _sq(_values(out.mu_phi) - zeta_theta) + nu / (nu + m1 + n - 2) * np.sum(
        np.exp(2.0 * _values(out.log_sigma_phi)), axis=1
    )
    recon = _sq(xs - _values(model.decode(z1, z2)))
    vals = 1.0 + level1 + inner / (nu * cfg.sigma_z**2) + recon / (nu * cfg.sigma_x**2)
    return float(vals.mean()), float(vals.std(ddof=1) / math.sqrt(draws))
