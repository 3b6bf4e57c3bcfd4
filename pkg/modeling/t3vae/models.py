from __future__ import annotations

import math
from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np

from .errors import ContractError, DomainError

if TYPE_CHECKING:
    from .autodiff import Tensor


def _frozen_array(values, name: str) -> np.ndarray:
    arr = np.array(values, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise DomainError(f"{name} must be finite")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class TParams:
    """Multivariate Student-t t_d(mu, scale, nu).

    `scale` is either a vector (diagonal scale matrix) or a full symmetric
    positive-definite matrix. A scalar scale is broadcast to an isotropic
    diagonal.
    """

    mu: np.ndarray
    scale: np.ndarray
    nu: float

    def __post_init__(self):
        mu = _frozen_array(np.atleast_1d(np.asarray(self.mu, dtype=np.float64)), "mu")
        if mu.ndim != 1:
            raise ContractError(f"mu must be a vector, got shape {mu.shape}")
        scale = np.asarray(self.scale, dtype=np.float64)
        if scale.ndim == 0:
            scale = np.full(mu.shape, float(scale))
        if scale.ndim == 1:
            if scale.shape != mu.shape:
                raise ContractError(f"diagonal scale shape {scale.shape} does not match mu {mu.shape}")
            if np.any(scale <= 0):
                raise DomainError("diagonal scale entries must be strictly positive")
        elif scale.ndim == 2:
            if scale.shape != (mu.size, mu.size):
                raise ContractError(f"scale matrix shape {scale.shape} does not match dimension {mu.size}")
            if not np.allclose(scale, scale.T, rtol=1e-12, atol=1e-14):
                raise DomainError("scale matrix must be symmetric")
        else:
            raise ContractError("scale must be a scalar, vector or matrix")
        nu = float(self.nu)
        if not nu > 0 or not math.isfinite(nu):
            raise DomainError(f"degrees of freedom must be finite and > 0, got {self.nu}")
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "scale", _frozen_array(scale, "scale"))
        object.__setattr__(self, "nu", nu)

    @property
    def dim(self) -> int:
        return int(self.mu.size)

    @property
    def is_diagonal(self) -> bool:
        return self.scale.ndim == 1

    def scale_matrix(self) -> np.ndarray:
        return np.diag(self.scale) if self.is_diagonal else np.array(self.scale)


@dataclass(frozen=True)
class GaussianParams:
    mu: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        mu = _frozen_array(np.atleast_1d(np.asarray(self.mu, dtype=np.float64)), "mu")
        cov = np.asarray(self.cov, dtype=np.float64)
        if cov.ndim == 0:
            cov = np.full(mu.shape, float(cov))
        if cov.ndim == 1 and (cov.shape != mu.shape or np.any(cov <= 0)):
            raise DomainError("diagonal covariance must match mu and be strictly positive")
        if cov.ndim == 2 and cov.shape != (mu.size, mu.size):
            raise ContractError(f"covariance shape {cov.shape} does not match dimension {mu.size}")
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "cov", _frozen_array(cov, "cov"))

    @property
    def dim(self) -> int:
        return int(self.mu.size)

    @property
    def is_diagonal(self) -> bool:
        return self.cov.ndim == 1

    def cov_matrix(self) -> np.ndarray:
        return np.diag(self.cov) if self.is_diagonal else np.array(self.cov)


FLAT_KINDS = ("t3vae", "gaussian_vae", "beta_vae")


@dataclass(frozen=True)
class ModelConfig:
    n: int
    m: int
    nu: float = math.inf  # inf for the Gaussian kinds
    sigma: float = 1.0
    beta: float = 1.0
    kind: str = "t3vae"  # t3vae|gaussian_vae|beta_vae
    mc_samples: int = 1

    def __post_init__(self):
        if self.kind not in FLAT_KINDS:
            raise DomainError(f"unknown model kind: {self.kind}")
        if self.n < 1 or self.m < 1:
            raise DomainError("dimensions n and m must be >= 1")
        if not self.sigma > 0:
            raise DomainError("sigma must be > 0")
        if self.mc_samples < 1:
            raise DomainError("mc_samples must be >= 1")
        if self.kind == "t3vae" and not (self.nu > 2 and math.isfinite(self.nu)):
            raise DomainError(f"t3vae requires finite nu > 2, got {self.nu}")
        if self.beta < 0:
            raise DomainError("beta must be >= 0")

    @property
    def heavy_tailed(self) -> bool:
        return self.kind == "t3vae"

    @property
    def gamma(self) -> float:
        return -2.0 / (self.nu + self.m + self.n)


@dataclass(frozen=True)
class DerivedConstants:
    gamma: float
    C1: float
    C2: float
    tau2: float
    alpha: float


@dataclass
class EncoderOutput:
    mu_phi: "Tensor"  # (batch, m)
    log_sigma_phi: "Tensor"  # (batch, m) diagonal log-scales


@dataclass
class LossTerms:
    total: "Tensor"  # scalar, batch mean
    reconstruction: float  # batch mean of ||x - mu_theta(z)||^2 / (2 sigma^2)
    regularizer: float


HIER_KINDS = ("t3hvae", "gaussian_hvae")


@dataclass(frozen=True)
class HierConfig:
    n: int
    m1: int
    m2: int
    nu: float = math.inf
    sigma_z: float = 1.0
    sigma_x: float = 1.0
    kind: str = "t3hvae"  # t3hvae|gaussian_hvae
    mc_samples: int = 1

    def __post_init__(self):
        if self.kind not in HIER_KINDS:
            raise DomainError(f"unknown hierarchical kind: {self.kind}")
        if self.n < 1 or self.m1 < 1 or self.m2 < 0:
            raise DomainError("dimensions must satisfy n >= 1, m1 >= 1, m2 >= 0")
        if not (self.sigma_z > 0 and self.sigma_x > 0):
            raise DomainError("sigma_z and sigma_x must be > 0")
        if self.kind == "t3hvae" and not (self.nu > 2 and math.isfinite(self.nu)):
            raise DomainError(f"t3hvae requires finite nu > 2, got {self.nu}")

    @property
    def heavy_tailed(self) -> bool:
        return self.kind == "t3hvae"

    @property
    def gamma(self) -> float:
        return -2.0 / (self.nu + self.m1 + self.m2 + self.n)


@dataclass(frozen=True)
class HierConstants:
    C1_tilde: float
    C2_tilde: float


@dataclass
class HierEncoderOutput:
    zeta_phi: "Tensor"  # (batch, m1)
    log_lambda_phi: "Tensor"  # (batch, m1)
    mu_phi: "Tensor"  # (batch, m2), evaluated at the sampled z1
    log_sigma_phi: "Tensor"  # (batch, m2)


@dataclass(frozen=True)
class LossCoefficients:
    """Multipliers of each term inside the 1/2 * E_x[...] bracket of a loss."""

    reconstruction: float  # on ||x - mu_theta||^2
    mean_sq: float  # on ||mu_phi||^2 (level-1 mean)
    trace: float  # on tr Sigma_phi (level-1 scale)
    det_power: float  # on |Sigma_phi|^{-gamma/(2(1+gamma))}, 0 when absent
    log_det: float = 0.0  # on log|Lambda_phi| (hierarchical only)
