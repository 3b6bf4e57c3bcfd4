"""Multivariate Student-t primitives: normalisers, log-densities, sampling, moments."""
from __future__ import annotations

import math

import numpy as np
from scipy import stats
from scipy.special import betaln, gammaln

from .errors import ContractError, DomainError, MomentUndefinedError, NumericError
from .models import GaussianParams, TParams

LOG_PI = math.log(math.pi)
LOG_2PI = math.log(2.0 * math.pi)


def _log_c(nu: float, d: int) -> float:
    """log C_{nu,d}; d == 0 gives 0 (the empty product)."""
    if d == 0:
        return 0.0
    # lgamma((nu+d)/2) - lgamma(nu/2) == lgamma(d/2) - betaln(nu/2, d/2), stable for huge nu
    return float(gammaln(0.5 * d) - betaln(0.5 * nu, 0.5 * d) - 0.5 * d * (math.log(nu) + LOG_PI))


def log_norm_const(nu: float, d: int) -> float:
    if not nu > 0 or not math.isfinite(nu):
        raise DomainError(f"degrees of freedom must be finite and > 0, got {nu}")
    if int(d) != d or d < 1:
        raise DomainError(f"dimension must be an integer >= 1, got {d}")
    return _log_c(float(nu), int(d))


def _as_rows(x, d: int) -> tuple[np.ndarray, bool]:
    arr = np.asarray(x, dtype=np.float64)
    single = arr.ndim <= 1
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    elif arr.ndim == 1:
        # a 1-d array is one point unless d == 1, where it is a column of points
        if d == 1 and arr.size != 1:
            arr, single = arr.reshape(-1, 1), False
        else:
            arr = arr.reshape(1, -1)
    if arr.ndim != 2 or arr.shape[1] != d:
        raise ContractError(f"points of dimension {arr.shape[-1]} do not match distribution dimension {d}")
    return arr, single


def _cholesky(matrix: np.ndarray, what: str) -> np.ndarray:
    try:
        return np.linalg.cholesky(matrix)
    except np.linalg.LinAlgError as e:
        raise NumericError(f"{what} is not positive definite (condition number {np.linalg.cond(matrix):.3e})") from e


def mahalanobis_logdet(x: np.ndarray, mu: np.ndarray, scale: np.ndarray) -> tuple[np.ndarray, float]:
    """Row-wise (x-mu)^T S^{-1} (x-mu) and log|S| for a diagonal or full scale S."""
    diff = x - mu
    if scale.ndim == 1:
        return np.sum(diff * diff / scale, axis=1), float(np.sum(np.log(scale)))
    chol = _cholesky(scale, "scale matrix")
    solved = np.linalg.solve(chol, diff.T)
    return np.sum(solved * solved, axis=0), float(2.0 * np.sum(np.log(np.diag(chol))))


def log_density(x, p: TParams):
    """log t_d(x | mu, scale, nu); rows of `x` are points. Returns a float for a single point."""
    rows, single = _as_rows(x, p.dim)
    maha, logdet = mahalanobis_logdet(rows, p.mu, p.scale)
    out = _log_c(p.nu, p.dim) - 0.5 * logdet - 0.5 * (p.nu + p.dim) * np.log1p(maha / p.nu)
    return float(out[0]) if single else out


def sample(p: TParams, count: int, rng: np.random.Generator) -> np.ndarray:
    """Draw `count` rows as mu + Z / sqrt(V / nu), Z ~ N(0, scale), V ~ chi2(nu)."""
    if count < 1:
        raise ContractError(f"count must be >= 1, got {count}")
    z = rng.standard_normal((count, p.dim))
    if p.is_diagonal:
        z = z * np.sqrt(p.scale)
    else:
        z = z @ _cholesky(p.scale, "scale matrix").T
    v = rng.chisquare(p.nu, size=(count, 1))
    return p.mu + z / np.sqrt(v / p.nu)


def covariance(p: TParams) -> np.ndarray:
    if p.nu <= 2:
        raise MomentUndefinedError(f"covariance undefined for nu = {p.nu} <= 2")
    return p.nu / (p.nu - 2.0) * p.scale_matrix()


def pushforward(p: TParams, a, b) -> TParams:
    """Law of a @ x + b for x ~ p; `a` is a scalar, a diagonal vector or a square matrix."""
    a = np.asarray(a, dtype=np.float64)
    b = np.broadcast_to(np.asarray(b, dtype=np.float64), p.mu.shape)
    if a.ndim == 0 or (a.ndim == 1 and p.is_diagonal):
        a = np.broadcast_to(a, p.mu.shape)
        if np.any(a == 0):
            raise DomainError("affine map must be invertible")
        scale = a * a * p.scale if p.is_diagonal else np.outer(a, a) * p.scale
        return TParams(a * p.mu + b, scale, p.nu)
    if a.ndim == 1:
        a = np.diag(a)
    if a.shape != (p.dim, p.dim):
        raise ContractError(f"affine matrix shape {a.shape} does not match dimension {p.dim}")
    scale = a @ p.scale_matrix() @ a.T
    return TParams(a @ p.mu + b, 0.5 * (scale + scale.T), p.nu)


def cdf_1d(x, p: TParams):
    if p.dim != 1:
        raise ContractError("cdf_1d needs a univariate distribution")
    return stats.t.cdf(x, df=p.nu, loc=p.mu[0], scale=math.sqrt(p.scale_matrix()[0, 0]))


def gaussian_log_density(x, g: GaussianParams):
    rows, single = _as_rows(x, g.dim)
    maha, logdet = mahalanobis_logdet(rows, g.mu, g.cov)
    out = -0.5 * (g.dim * LOG_2PI + logdet + maha)
    return float(out[0]) if single else out


def gaussian_sample(g: GaussianParams, count: int, rng: np.random.Generator) -> np.ndarray:
    if count < 1:
        raise ContractError(f"count must be >= 1, got {count}")
    z = rng.standard_normal((count, g.dim))
    if g.is_diagonal:
        return g.mu + z * np.sqrt(g.cov)
    return g.mu + z @ _cholesky(g.cov, "covariance").T
