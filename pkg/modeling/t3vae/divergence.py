"""Gamma-power entropy, cross-entropy and divergence.

    H_g(p)    = -(int p^(1+g))^(1/(1+g))
    C_g(q, p) = -int q * (p / ||p||_(1+g))^g
    D_g(q, p) = (C_g(q, p) - H_g(q)) / g

For t-distributions with g = -2/(nu+d) all three have closed forms. The
`*_numeric` variants evaluate the defining integrals by quadrature and serve
as the oracle for those closed forms.

Density callables passed to the numeric functions map a (rows, d) array of
points to a (rows,) array of log-densities.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import ContractError, DomainError, MomentUndefinedError, NumericError
from .models import GaussianParams, TParams
from .quadrature import QuadratureResult, integrate_1d, integrate_nd
from .tdist import _cholesky, _log_c, mahalanobis_logdet

LogPdf = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class GammaIndex:
    gamma: float

    def __post_init__(self):
        g = float(self.gamma)
        if g == 0.0 or not g > -1.0 or not math.isfinite(g):
            raise DomainError(f"gamma must lie in (-1, 0) or (0, inf), got {self.gamma}")
        object.__setattr__(self, "gamma", g)

    def __float__(self) -> float:
        return self.gamma


def gamma_for(nu: float, d: int) -> GammaIndex:
    if not nu > 2:
        raise DomainError(f"coupled gamma needs nu > 2, got {nu}")
    if d < 0:
        raise DomainError(f"dimension must be >= 0, got {d}")
    return GammaIndex(-2.0 / (nu + d))


def _coupled(p: TParams) -> float:
    if not p.nu > 2:
        raise MomentUndefinedError(f"gamma-power entropy of a t needs nu > 2, got {p.nu}")
    return -2.0 / (p.nu + p.dim)


def _logdet(p: TParams) -> float:
    if p.is_diagonal:
        return float(np.sum(np.log(p.scale)))
    chol = _cholesky(p.scale, "scale matrix")
    return float(2.0 * np.sum(np.log(np.diag(chol))))


def gamma_entropy_t(p: TParams) -> float:
    g = _coupled(p)
    nu, d = p.nu, p.dim
    log_abs = (
        g / (1 + g) * _log_c(nu, d)
        - g / (2 * (1 + g)) * _logdet(p)
        + 1 / (1 + g) * math.log1p(d / (nu - 2))
    )
    return -math.exp(log_abs)


def _check_pair(q: TParams, p: TParams) -> None:
    if q.dim != p.dim:
        raise ContractError(f"dimension mismatch: {q.dim} vs {p.dim}")
    if q.nu != p.nu:
        raise ContractError(f"degrees of freedom mismatch: {q.nu} vs {p.nu}")


def _cross_bracket(q: TParams, p: TParams) -> float:
    """1 + tr(S_p^-1 S_q)/(nu-2) + (mu_q-mu_p)^T S_p^-1 (mu_q-mu_p)/nu."""
    nu = p.nu
    maha, _ = mahalanobis_logdet(q.mu[None, :], p.mu, p.scale)
    if p.is_diagonal and q.is_diagonal:
        trace = float(np.sum(q.scale / p.scale))
    else:
        chol = _cholesky(p.scale_matrix(), "scale matrix")
        trace = float(np.trace(np.linalg.solve(chol.T, np.linalg.solve(chol, q.scale_matrix()))))
    return 1.0 + trace / (nu - 2) + float(maha[0]) / nu


def gamma_cross_entropy_t(q: TParams, p: TParams) -> float:
    _check_pair(q, p)
    g = _coupled(p)
    nu, d = p.nu, p.dim
    log_abs = (
        g / (1 + g) * _log_c(nu, d)
        - g / (2 * (1 + g)) * _logdet(p)
        - g / (1 + g) * math.log1p(d / (nu - 2))
    )
    return -math.exp(log_abs) * _cross_bracket(q, p)


def gamma_divergence_tt(q: TParams, p: TParams) -> float:
    """Closed-form D_g(q || p) between two t's sharing nu > 2 and dimension d."""
    _check_pair(q, p)
    g = _coupled(p)
    nu, d = p.nu, p.dim
    e = -g / (2 * (1 + g))
    k = math.exp(g / (1 + g) * _log_c(nu, d) - g / (1 + g) * math.log1p(d / (nu - 2)))
    term0 = math.exp(e * _logdet(q)) * (1 + d / (nu - 2))
    term1 = math.exp(e * _logdet(p)) * _cross_bracket(q, p)
    return -(1.0 / g) * k * (term1 - term0)


def kl_gaussian(q: GaussianParams, p: GaussianParams) -> float:
    if q.dim != p.dim:
        raise ContractError(f"dimension mismatch: {q.dim} vs {p.dim}")
    d = q.dim
    maha, logdet_p = mahalanobis_logdet(q.mu[None, :], p.mu, p.cov)
    _, logdet_q = mahalanobis_logdet(q.mu[None, :], q.mu, q.cov)
    if p.is_diagonal and q.is_diagonal:
        trace = float(np.sum(q.cov / p.cov))
    else:
        chol = _cholesky(p.cov_matrix(), "covariance")
        trace = float(np.trace(np.linalg.solve(chol.T, np.linalg.solve(chol, q.cov_matrix()))))
    return 0.5 * (logdet_p - logdet_q - d + trace + float(maha[0]))


# -- quadrature oracle ---------------------------------------------------------


@dataclass(frozen=True)
class Domain:
    """Integration region: a box, or all of R^dim around `center` with spread `scale`.

    For dim == 1 on the whole line, `center` entries are used as breakpoints.
    """

    dim: int = 1
    box: tuple | None = None
    center: tuple | None = None
    scale: tuple | None = None

    @staticmethod
    def around(params: Sequence[TParams]) -> "Domain":
        dim = params[0].dim
        mus = np.array([p.mu for p in params])
        spread = np.sqrt(np.max([np.diag(p.scale_matrix()) for p in params], axis=0))
        if dim == 1:
            return Domain(dim=1, center=tuple(float(m) for m in mus[:, 0]))
        return Domain(dim=dim, center=tuple(mus.mean(axis=0)), scale=tuple(spread))


def _integrate(f_rows: Callable[[np.ndarray], np.ndarray], domain: Domain) -> QuadratureResult:
    if domain.dim == 1:

        def f(x: float) -> float:
            return float(f_rows(np.array([[x]]))[0])

        if domain.box is not None:
            (lo, hi), = domain.box
            return integrate_1d(f, lo, hi, breaks=domain.center or ())
        return integrate_1d(f, breaks=domain.center or ())
    if domain.dim > 3:
        raise ContractError("quadrature oracle supports up to 3 dimensions")
    return integrate_nd(f_rows, domain.dim, center=domain.center, scale=domain.scale, box=domain.box)


def _power_norm(logpdf: LogPdf, g: float, domain: Domain) -> QuadratureResult:
    """int p^(1+g)."""
    return _integrate(lambda x: np.exp((1 + g) * logpdf(x)), domain)


def gamma_entropy_numeric(logpdf: LogPdf, gamma: GammaIndex, domain: Domain) -> QuadratureResult:
    g = float(gamma)
    r = _power_norm(logpdf, g, domain)
    if not r.value > 0:
        raise NumericError("power integral is not positive")
    value = -(r.value ** (1 / (1 + g)))
    return QuadratureResult(value, abs(value) / (1 + g) * r.abs_error / r.value)


def gamma_cross_entropy_numeric(
    q_logpdf: LogPdf, p_logpdf: LogPdf, gamma: GammaIndex, domain: Domain
) -> QuadratureResult:
    g = float(gamma)
    norm = _power_norm(p_logpdf, g, domain)
    cross = _integrate(lambda x: np.exp(q_logpdf(x) + g * p_logpdf(x)), domain)
    scale = norm.value ** (-g / (1 + g))
    value = -cross.value * scale
    rel = cross.abs_error / abs(cross.value) + abs(g / (1 + g)) * norm.abs_error / norm.value
    return QuadratureResult(value, abs(value) * rel)


def gamma_divergence_numeric(
    q_logpdf: LogPdf, p_logpdf: LogPdf, gamma: GammaIndex, domain: Domain
) -> QuadratureResult:
    g = float(gamma)
    cross = gamma_cross_entropy_numeric(q_logpdf, p_logpdf, gamma, domain)
    ent = gamma_entropy_numeric(q_logpdf, gamma, domain)
    return QuadratureResult((cross.value - ent.value) / g, (cross.abs_error + ent.abs_error) / abs(g))


def kl_numeric(q_logpdf: LogPdf, p_logpdf: LogPdf, domain: Domain) -> QuadratureResult:
    def f(x):
        lq = q_logpdf(x)
        return np.exp(lq) * (lq - p_logpdf(x))

    return _integrate(f, domain)


def first_order_gap(
    logpdf: LogPdf,
    gamma: float,
    sigma_fn: Callable[[np.ndarray], np.ndarray] | None = None,
    domain: Domain | None = None,
) -> float:
    """(int s^-g p^(1+g))^(1/(1+g)) - [int s^(-g/(1+g)) p - g * H(p)], H the Shannon entropy.

    The bracket is the first-order expansion in g of the left term, so the gap is O(g^2).
    """
    g = float(gamma)
    domain = domain or Domain(dim=1, center=(0.0,))
    sig = sigma_fn or (lambda x: np.ones(x.shape[0]))

    power = _integrate(lambda x: sig(x) ** (-g) * np.exp((1 + g) * logpdf(x)), domain).value
    linear = _integrate(lambda x: sig(x) ** (-g / (1 + g)) * np.exp(logpdf(x)), domain).value

    def plogp(x):
        lp = logpdf(x)
        return np.where(np.isfinite(lp), np.exp(lp) * lp, 0.0)

    shannon = -_integrate(plogp, domain).value
    return power ** (1 / (1 + g)) - (linear - g * shannon)
