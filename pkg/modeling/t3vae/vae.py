"""Flat models: the heavy-tailed t3VAE and the Gaussian VAE / beta-VAE baselines.

The t3VAE joint model is a power form in (x, z):

    p(x, z) = C_{nu,m+n} sigma^-n (1 + (|z|^2 + |x - mu_theta(z)|^2 / sigma^2) / nu)^(-(nu+m+n)/2)

with prior t_m(0, I, nu), decoder t_n(mu_theta(z), ., nu+m) and encoder
t_m(mu_phi(x), (1+n/nu)^-1 Sigma_phi(x), nu+n). Training minimises the
gamma-loss, gamma = -2/(nu+m+n); generation samples z from the alternative
prior t_m(0, tau^2 I, nu+n).
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Dict, List, Sequence

import numpy as np
from loguru import logger

from .autodiff import Tensor
from .divergence import gamma_divergence_tt
from .errors import ContractError, DomainError, TrainingDivergenceError
from .models import (
    DerivedConstants,
    EncoderOutput,
    GaussianParams,
    LossCoefficients,
    LossTerms,
    ModelConfig,
    TParams,
)
from .nn import MlpNet, reparam_gaussian, reparam_t
from .tdist import LOG_2PI, _log_c, gaussian_log_density, log_density, sample

Decoder = Callable[[Tensor], Tensor]


def _values(t) -> np.ndarray:
    return np.asarray(t.value if isinstance(t, Tensor) else t, dtype=np.float64)


def _decode(decoder: Decoder, z: np.ndarray) -> np.ndarray:
    out = decoder(Tensor(z))
    return _values(out)


def derive_constants(cfg: ModelConfig) -> DerivedConstants:
    if not cfg.heavy_tailed:
        raise DomainError(f"constants are defined for t3vae only, got {cfg.kind}")
    nu, m, n, sigma = cfg.nu, cfg.m, cfg.n, cfg.sigma
    if not nu > 2:
        raise DomainError(f"nu must be > 2, got {nu}")
    g = cfg.gamma
    log_sigma = math.log(sigma)
    log_c1 = (
        math.log((nu + m + n - 2) / (nu + n - 2))
        + 0.5 * g * m * math.log1p(n / nu)
        + g * _log_c(nu + n, m)
    ) / (1 + g)
    log_c2 = (-g / (1 + g)) * (
        math.log((nu + m + n - 2) / (nu - 2)) + n * log_sigma - _log_c(nu, m + n)
    )
    log_tau2 = -math.log1p(n / nu) + (2.0 / (nu + n - 2)) * (
        -n * log_sigma + _log_c(nu, n) - math.log1p(n / (nu - 2))
    )
    c2 = math.exp(log_c2)
    return DerivedConstants(
        gamma=g,
        C1=math.exp(log_c1),
        C2=c2,
        tau2=math.exp(log_tau2),
        alpha=-g * nu / (2.0 * c2),
    )


def loss_coefficients(cfg: ModelConfig, constants: DerivedConstants) -> LossCoefficients:
    nu, n = cfg.nu, cfg.n
    return LossCoefficients(
        reconstruction=1.0 / cfg.sigma**2,
        mean_sq=1.0,
        trace=nu / (nu + n - 2),
        det_power=-nu * constants.C1 / constants.C2,
    )


# -- distributions -------------------------------------------------------------


def prior_params(cfg: ModelConfig):
    if cfg.heavy_tailed:
        return TParams(np.zeros(cfg.m), 1.0, cfg.nu)
    return GaussianParams(np.zeros(cfg.m), 1.0)


def alternative_prior(cfg: ModelConfig, constants: DerivedConstants) -> TParams:
    """t_m(0, tau^2 I, nu+n), the generation prior and the regularizer target."""
    return TParams(np.zeros(cfg.m), constants.tau2, cfg.nu + cfg.n)


def encoder_params(out: EncoderOutput, cfg: ModelConfig, row: int = 0):
    mu = _values(out.mu_phi)[row]
    var = np.exp(2.0 * _values(out.log_sigma_phi)[row])
    if cfg.heavy_tailed:
        return TParams(mu, var / (1.0 + cfg.n / cfg.nu), cfg.nu + cfg.n)
    return GaussianParams(mu, var)


def decoder_params(z, mu_theta_z, cfg: ModelConfig):
    z = np.atleast_1d(np.asarray(z, dtype=np.float64))
    mu = np.atleast_1d(np.asarray(mu_theta_z, dtype=np.float64))
    if z.size != cfg.m or mu.size != cfg.n:
        raise ContractError(f"expected z of size {cfg.m} and decoder mean of size {cfg.n}")
    if cfg.heavy_tailed:
        factor = (1.0 + float(z @ z) / cfg.nu) / (1.0 + cfg.m / cfg.nu)
        return TParams(mu, factor * cfg.sigma**2, cfg.nu + cfg.m)
    return GaussianParams(mu, cfg.sigma**2)


def joint_log_density(x, z, mu_theta_z, cfg: ModelConfig):
    """log p(x, z) for rows of x, z and the matching decoder means."""
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    z = np.atleast_2d(np.asarray(z, dtype=np.float64))
    mu = np.atleast_2d(np.asarray(mu_theta_z, dtype=np.float64))
    if x.shape[1] != cfg.n or z.shape[1] != cfg.m or mu.shape != x.shape:
        raise ContractError("joint density inputs do not match the model dimensions")
    zz = np.sum(z * z, axis=1)
    rr = np.sum((x - mu) ** 2, axis=1) / cfg.sigma**2
    n, m = cfg.n, cfg.m
    if cfg.heavy_tailed:
        nu = cfg.nu
        out = _log_c(nu, m + n) - n * math.log(cfg.sigma) - 0.5 * (nu + m + n) * np.log1p((zz + rr) / nu)
    else:
        out = -0.5 * (m + n) * LOG_2PI - n * math.log(cfg.sigma) - 0.5 * (zz + rr)
    return float(out[0]) if out.size == 1 else out


def factorized_log_density(x, z, mu_theta_z, cfg: ModelConfig) -> float:
    """log prior(z) + log decoder(x | z) for a single point."""
    z = np.atleast_1d(np.asarray(z, dtype=np.float64))
    prior = prior_params(cfg)
    dec = decoder_params(z, mu_theta_z, cfg)
    if cfg.heavy_tailed:
        return log_density(z, prior) + log_density(x, dec)
    return gaussian_log_density(z, prior) + gaussian_log_density(x, dec)


def shallow_posterior(W, b, cfg: ModelConfig, x) -> TParams:
    """Exact encoder for the linear decoder mu_theta(z) = W z + b."""
    W = np.atleast_2d(np.asarray(W, dtype=np.float64))
    b = np.atleast_1d(np.asarray(b, dtype=np.float64))
    x = np.atleast_1d(np.asarray(x, dtype=np.float64))
    n, m = W.shape
    if (n, m) != (cfg.n, cfg.m) or b.size != n or x.size != n:
        raise ContractError(f"W must be {cfg.n}x{cfg.m} with b, x of size {cfg.n}")
    A = W @ W.T + cfg.sigma**2 * np.eye(n)
    r = x - b
    A_inv_r = np.linalg.solve(A, r)
    A_inv_W = np.linalg.solve(A, W)
    mean = W.T @ A_inv_r
    factor = (1.0 + float(r @ A_inv_r) / cfg.nu) / (1.0 + n / cfg.nu)
    cov = factor * (np.eye(m) - W.T @ A_inv_W)
    return TParams(mean, 0.5 * (cov + cov.T), cfg.nu + n)


def sample_joint_bayesian(
    count: int, decoder_mean: Callable[[np.ndarray], np.ndarray], cfg: ModelConfig, rng: np.random.Generator
) -> tuple[np.ndarray, np.ndarray]:
    """Draw (x, z) through the latent precision: lam ~ chi2(nu), z ~ N(0, nu/lam I), x ~ N(mu_theta(z), nu/lam sigma^2 I)."""
    lam = rng.chisquare(cfg.nu, size=(count, 1))
    spread = np.sqrt(cfg.nu / lam)
    z = spread * rng.standard_normal((count, cfg.m))
    mu = np.asarray(decoder_mean(z), dtype=np.float64)
    x = mu + spread * cfg.sigma * rng.standard_normal((count, cfg.n))
    return x, z


def latent_precision_density_mc(
    x, z, mu_theta_z, cfg: ModelConfig, draws: int, rng: np.random.Generator
) -> tuple[float, float]:
    """Monte Carlo over lam ~ chi2(nu) of N_m(z; 0, nu/lam I) N_n(x; mu_theta, nu/lam sigma^2 I); (mean, stderr)."""
    x = np.atleast_1d(np.asarray(x, dtype=np.float64))
    z = np.atleast_1d(np.asarray(z, dtype=np.float64))
    mu = np.atleast_1d(np.asarray(mu_theta_z, dtype=np.float64))
    m, n, nu = cfg.m, cfg.n, cfg.nu
    lam = rng.chisquare(nu, size=draws)
    var = nu / lam
    log_vals = (
        -0.5 * (m + n) * (LOG_2PI + np.log(var))
        - n * math.log(cfg.sigma)
        - 0.5 * (float(z @ z) + float((x - mu) @ (x - mu)) / cfg.sigma**2) / var
    )
    vals = np.exp(log_vals)
    return float(vals.mean()), float(vals.std(ddof=1) / math.sqrt(draws))


# -- losses --------------------------------------------------------------------


def gamma_regularizer(out: EncoderOutput, cfg: ModelConfig, constants: DerivedConstants) -> Tensor:
    """Per-row |mu|^2 + nu/(nu+n-2) tr Sigma - (nu C1/C2) |Sigma|^(-g/(2(1+g)))."""
    coef = loss_coefficients(cfg, constants)
    g = constants.gamma
    mean_sq = out.mu_phi.square().sum(axis=1)
    trace = (out.log_sigma_phi * 2.0).exp().sum(axis=1)
    det_power = (out.log_sigma_phi.sum(axis=1) * (-g / (1 + g))).exp()
    return mean_sq * coef.mean_sq + trace * coef.trace + det_power * coef.det_power


def kl_regularizer(out: EncoderOutput) -> Tensor:
    """Per-row KL(N(mu, diag sigma^2) || N(0, I))."""
    var = (out.log_sigma_phi * 2.0).exp()
    terms = var + out.mu_phi.square() - 1.0 - out.log_sigma_phi * 2.0
    return terms.sum(axis=1) * 0.5


def _squared_residual(batch: np.ndarray, z: Tensor, decoder: Decoder) -> Tensor:
    diff = decoder(z) - batch
    return diff.square().sum(axis=1)


def _reconstruction(
    batch: np.ndarray, out: EncoderOutput, decoder: Decoder, sampler: Callable[[], Tensor], mc_samples: int
) -> Tensor:
    total = None
    for _ in range(mc_samples):
        sq = _squared_residual(batch, sampler(), decoder)
        total = sq if total is None else total + sq
    return total * (1.0 / mc_samples)


def _finish(total: Tensor, recon: float, reg: float, batch_index: int | None) -> LossTerms:
    value = float(total.value)
    if not math.isfinite(value):
        raise TrainingDivergenceError(f"non-finite loss {value}", batch_index=batch_index)
    return LossTerms(total=total, reconstruction=recon, regularizer=reg)


def gamma_loss(
    batch,
    out: EncoderOutput,
    decoder: Decoder,
    cfg: ModelConfig,
    constants: DerivedConstants,
    rng: np.random.Generator,
    mc_samples: int | None = None,
    batch_index: int | None = None,
) -> LossTerms:
    """1/2 * batch mean of [ |x - mu_theta(z)|^2 / sigma^2 + regularizer ], z from the t-encoder."""
    if not cfg.heavy_tailed:
        raise DomainError(f"gamma_loss needs a t3vae config, got {cfg.kind}")
    x = np.asarray(batch, dtype=np.float64)
    L = mc_samples or cfg.mc_samples
    coef = loss_coefficients(cfg, constants)
    sq = _reconstruction(
        x, out, decoder, lambda: reparam_t(out.mu_phi, out.log_sigma_phi, cfg.nu, cfg.n, rng), L
    )
    reg = gamma_regularizer(out, cfg, constants)
    total = (sq * coef.reconstruction + reg).mean() * 0.5
    recon = 0.5 * coef.reconstruction * float(np.mean(sq.value))
    return _finish(total, recon, 0.5 * float(np.mean(reg.value)), batch_index)


def elbo_loss(
    batch,
    out: EncoderOutput,
    decoder: Decoder,
    cfg: ModelConfig,
    rng: np.random.Generator,
    mc_samples: int | None = None,
    batch_index: int | None = None,
) -> LossTerms:
    """Batch mean of |x - mu_theta(z)|^2 / (2 sigma^2) + beta * KL(q || N(0, I))."""
    if cfg.heavy_tailed:
        raise DomainError("elbo_loss is for the Gaussian kinds")
    x = np.asarray(batch, dtype=np.float64)
    L = mc_samples or cfg.mc_samples
    sq = _reconstruction(x, out, decoder, lambda: reparam_gaussian(out.mu_phi, out.log_sigma_phi, rng), L)
    kl = kl_regularizer(out)
    scale = 0.5 / cfg.sigma**2
    total = (sq * scale + kl * cfg.beta).mean()
    return _finish(total, scale * float(np.mean(sq.value)), cfg.beta * float(np.mean(kl.value)), batch_index)


@dataclass(frozen=True)
class Decomposition:
    """Half the gamma regularizer of one row split as alpha * D(q_phi || p*) + constant."""

    regularizer: float
    divergence_term: float
    constant: float

    @property
    def residual(self) -> float:
        return self.regularizer - self.divergence_term - self.constant


def regularizer_decomposition(
    out: EncoderOutput, cfg: ModelConfig, constants: DerivedConstants, row: int = 0
) -> Decomposition:
    reg = float(gamma_regularizer(out, cfg, constants).value[row])
    q = encoder_params(out, cfg, row)
    div = gamma_divergence_tt(q, alternative_prior(cfg, constants))
    return Decomposition(
        regularizer=0.5 * reg,
        divergence_term=constants.alpha * div,
        constant=-0.5 * (cfg.nu + cfg.n) * constants.tau2,
    )


# -- generation ------------------------------------------------------------------


def generate(
    count: int, cfg: ModelConfig, constants: DerivedConstants | None, decoder: Decoder, rng: np.random.Generator
) -> np.ndarray:
    """Sample z from the generation prior, then x from the decoder distribution."""
    if count < 1:
        raise ContractError(f"count must be >= 1, got {count}")
    if cfg.heavy_tailed:
        z = sample(alternative_prior(cfg, constants), count, rng)
    else:
        z = rng.standard_normal((count, cfg.m))
    return decoder_sample(z, _decode(decoder, z), cfg, rng)


def decoder_sample(z: np.ndarray, mu: np.ndarray, cfg: ModelConfig, rng: np.random.Generator) -> np.ndarray:
    """One draw of x per row from decoder_params(z, mu), vectorised over rows."""
    eps = rng.standard_normal(mu.shape)
    if cfg.heavy_tailed:
        factor = (1.0 + np.sum(z * z, axis=1, keepdims=True) / cfg.nu) / (1.0 + cfg.m / cfg.nu)
        df = cfg.nu + cfg.m
        v = rng.chisquare(df, size=(mu.shape[0], 1))
        return mu + np.sqrt(factor) * cfg.sigma * eps / np.sqrt(v / df)
    return mu + cfg.sigma * eps


class VAE:
    """Encoder x -> (mu_phi, log sigma_phi) and decoder z -> mu_theta for one flat config."""

    def __init__(self, cfg: ModelConfig, hidden_sizes: Sequence[int], rng: np.random.Generator):
        self.cfg = cfg
        self.hidden_sizes = list(hidden_sizes)
        self.constants = derive_constants(cfg) if cfg.heavy_tailed else None
        self.encoder = MlpNet([cfg.n, *self.hidden_sizes, 2 * cfg.m], rng)
        self.decoder = MlpNet([cfg.m, *self.hidden_sizes, cfg.n], rng)
        if self.constants is not None:
            c = self.constants
            logger.debug(f"t3vae constants: gamma={c.gamma:.6g} C1={c.C1:.6g} C2={c.C2:.6g} tau2={c.tau2:.6g} alpha={c.alpha:.6g}")

    def encode(self, batch) -> EncoderOutput:
        h = self.encoder(Tensor(np.asarray(batch, dtype=np.float64)))
        m = self.cfg.m
        return EncoderOutput(mu_phi=h[:, :m], log_sigma_phi=h[:, m:])

    def sample_latent(self, out: EncoderOutput, rng: np.random.Generator) -> Tensor:
        if self.cfg.heavy_tailed:
            return reparam_t(out.mu_phi, out.log_sigma_phi, self.cfg.nu, self.cfg.n, rng)
        return reparam_gaussian(out.mu_phi, out.log_sigma_phi, rng)

    def loss(self, batch, rng: np.random.Generator, batch_index: int | None = None) -> LossTerms:
        out = self.encode(batch)
        if self.cfg.heavy_tailed:
            return gamma_loss(batch, out, self.decoder, self.cfg, self.constants, rng, batch_index=batch_index)
        return elbo_loss(batch, out, self.decoder, self.cfg, rng, batch_index=batch_index)

    def generate(self, count: int, rng: np.random.Generator) -> np.ndarray:
        return generate(count, self.cfg, self.constants, self.decoder, rng)

    def generation_prior(self) -> Dict[str, float]:
        if self.cfg.heavy_tailed:
            return {"df": self.cfg.nu + self.cfg.n, "scale": self.constants.tau2}
        return {"df": math.inf, "scale": 1.0}

    def reconstruct(self, batch, rng: np.random.Generator) -> np.ndarray:
        return reconstruct(self, batch, rng)

    def reconstruction_mse(self, batch, rng: np.random.Generator) -> float:
        return reconstruction_mse(self, batch, rng)

    def parameters(self) -> List[Tensor]:
        return self.encoder.parameters() + self.decoder.parameters()

    def state_dict(self) -> Dict[str, np.ndarray]:
        state = {f"encoder.{k}": v for k, v in self.encoder.state_dict().items()}
        state.update({f"decoder.{k}": v for k, v in self.decoder.state_dict().items()})
        return state

    def load_state_dict(self, state: Dict[str, np.ndarray]) -> None:
        for prefix, net in (("encoder.", self.encoder), ("decoder.", self.decoder)):
            net.load_state_dict({k[len(prefix):]: v for k, v in state.items() if k.startswith(prefix)})


def reconstruct(model: VAE, batch, rng: np.random.Generator) -> np.ndarray:
    """Encode, sample z from the encoder, then sample x from the decoder distribution at z."""
    x = np.asarray(batch, dtype=np.float64)
    z = _values(model.sample_latent(model.encode(x), rng))
    return decoder_sample(z, _decode(model.decoder, z), model.cfg, rng)


def reconstruction_mse(model, batch, rng: np.random.Generator) -> float:
    """Batch mean of |x - mu_theta(z)|^2 with z drawn from the encoder."""
    x = np.asarray(batch, dtype=np.float64)
    z = model.sample_latent(model.encode(x), rng)
    return float(np.mean(_squared_residual(x, z, model.decoder).value))
