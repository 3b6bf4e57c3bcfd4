"""Numerical integration used as the independent oracle for the closed forms.

1-d integrals go through QUADPACK (`scipy.integrate.quad`), split at optional
breakpoints so peaked integrands on infinite ranges are resolved. 2-d and 3-d
integrals use a tensor product of composite Gauss-Legendre panels, either on a
box or on all of R^d through x = c + s * tan(pi * u / 2); the error estimate
is the difference to the same rule at half the number of panels.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from loguru import logger
from scipy import integrate

from .errors import ContractError, OracleError

DEFAULT_PANELS = {1: 200, 2: 50, 3: 14}
GL_ORDER = 8
_CHUNK_ROWS = 1 << 18


@dataclass(frozen=True)
class QuadratureResult:
    value: float
    abs_error: float

    def __float__(self) -> float:
        return self.value


def integrate_1d(
    f: Callable[[float], float],
    lo: float = -math.inf,
    hi: float = math.inf,
    breaks: Sequence[float] = (),
    epsabs: float = 1e-13,
    epsrel: float = 1e-11,
    limit: int = 500,
    fail_tol: float = 1e-6,
) -> QuadratureResult:
    """Adaptive Gauss-Kronrod over [lo, hi], summed over the pieces cut at `breaks`.

    QUADPACK warnings are tolerated when the reported error stays below
    `fail_tol`; otherwise the call fails with OracleError.
    """
    cuts = [lo] + sorted(b for b in breaks if lo < b < hi) + [hi]
    total, err = 0.0, 0.0
    for a, b in zip(cuts[:-1], cuts[1:]):
        out = integrate.quad(f, a, b, epsabs=epsabs, epsrel=epsrel, limit=limit, full_output=1)
        value, abserr = float(out[0]), float(out[1])
        if len(out) > 3:
            if not math.isfinite(value) or abserr > fail_tol * max(1.0, abs(value)):
                raise OracleError(f"quadrature on [{a}, {b}] did not converge (error {abserr:.2e}): {out[3]}")
            logger.warning(f"quadrature on [{a}, {b}] near its refinement limit (error {abserr:.2e})")
        total += value
        err += abserr
    return QuadratureResult(total, err)


def _gl_panels(panels: int, lo: float, hi: float) -> tuple[np.ndarray, np.ndarray]:
    nodes, weights = np.polynomial.legendre.leggauss(GL_ORDER)
    edges = np.linspace(lo, hi, panels + 1)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[:-1] + edges[1:])
    x = (mid[:, None] + half[:, None] * nodes[None, :]).ravel()
    w = (half[:, None] * weights[None, :]).ravel()
    return x, w


def _axis_rule(panels: int, center: float | None, scale: float | None, lo: float | None, hi: float | None):
    if center is not None:
        u, wu = _gl_panels(panels, -1.0, 1.0)
        angle = 0.5 * math.pi * u
        x = center + scale * np.tan(angle)
        w = wu * scale * 0.5 * math.pi / np.cos(angle) ** 2
        return x, w
    return _gl_panels(panels, lo, hi)


def _tensor_sum(f: Callable[[np.ndarray], np.ndarray], rules: list[tuple[np.ndarray, np.ndarray]]) -> float:
    xs = [r[0] for r in rules]
    ws = [r[1] for r in rules]
    # iterate over the first axis in slices so memory stays bounded
    rest_x = np.stack([g.ravel() for g in np.meshgrid(*xs[1:], indexing="ij")], axis=1) if len(xs) > 1 else None
    rest_w = np.ones(1)
    for w in ws[1:]:
        rest_w = np.outer(rest_w, w).ravel()
    total = 0.0
    step = max(1, _CHUNK_ROWS // max(1, rest_w.size))
    for start in range(0, xs[0].size, step):
        x0 = xs[0][start:start + step]
        w0 = ws[0][start:start + step]
        if rest_x is None:
            pts = x0[:, None]
            wts = w0
        else:
            pts = np.concatenate([np.repeat(x0, rest_x.shape[0])[:, None], np.tile(rest_x, (x0.size, 1))], axis=1)
            wts = np.outer(w0, rest_w).ravel()
        vals = np.asarray(f(pts), dtype=np.float64)
        total += float(np.sum(vals * wts))
    return total


def integrate_nd(
    f: Callable[[np.ndarray], np.ndarray],
    dim: int,
    center: Sequence[float] | None = None,
    scale: Sequence[float] | None = None,
    box: Sequence[tuple[float, float]] | None = None,
    panels: int | None = None,
    rtol: float = 1e-4,
    atol: float = 1e-10,
    max_refinements: int = 1,
) -> QuadratureResult:
    """Integrate a vectorised f (rows of points -> values) over R^dim or a box.

    With `box` the rule lives on the box; otherwise each axis is mapped to the
    whole line around `center` with spread `scale` (defaults 0 and 1). The
    panel count is doubled up to `max_refinements` times while the estimate
    exceeds max(atol, rtol * |value|); after that the call fails with OracleError.
    A region that misses the integrand's mass altogether is not detected.
    """
    if dim < 1:
        raise ContractError("dimension must be >= 1")
    panels = panels or DEFAULT_PANELS.get(dim, 8)
    if panels < 2:
        raise ContractError("need at least 2 panels per axis")

    def rules(k: int):
        if box is not None:
            if len(box) != dim:
                raise ContractError(f"box has {len(box)} axes, expected {dim}")
            return [_axis_rule(k, None, None, float(a), float(b)) for a, b in box]
        c = np.zeros(dim) if center is None else np.asarray(center, dtype=np.float64)
        s = np.ones(dim) if scale is None else np.asarray(scale, dtype=np.float64)
        return [_axis_rule(k, float(c[i]), float(s[i]), None, None) for i in range(dim)]

    coarse = _tensor_sum(f, rules(max(1, panels // 2)))
    fine = _tensor_sum(f, rules(panels))
    for level in range(max_refinements + 1):
        if not math.isfinite(fine):
            raise OracleError(f"{dim}-d quadrature produced a non-finite value")
        err = abs(fine - coarse)
        if err <= max(atol, rtol * abs(fine)):
            return QuadratureResult(fine, err)
        if level == max_refinements:
            break
        logger.debug(f"{dim}-d quadrature at {panels} panels off by {err:.2e}; refining")
        panels *= 2
        coarse, fine = fine, _tensor_sum(f, rules(panels))
    raise OracleError(f"{dim}-d quadrature did not converge at {panels} panels per axis (value {fine:.6g}, error {err:.2e})")
