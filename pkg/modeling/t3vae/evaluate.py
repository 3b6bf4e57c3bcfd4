"""MMD two-sample tests on full and tail regions, log-histograms, reconstruction reports."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Dict, List, Optional, Sequence

import numpy as np
from loguru import logger
from scipy.spatial.distance import pdist

from .config import rng_stream
from .data import as_batch
from .errors import ContractError, DomainError

MIN_SAMPLES = 4
SUBSAMPLE_CAP = 100_000
BANDWIDTH_POINTS = 2_000
REGIONS = ("full", "left", "right", "tails")
# tail thresholds: |x| > 6 on the line, radius > 10 in the plane
TAIL_THRESHOLDS = {1: 6.0, 2: 10.0}


@dataclass(frozen=True)
class MmdReport:
    statistic: Optional[float]
    p_value: Optional[float]
    bandwidth: Optional[float]
    n_bootstrap: int
    region: str
    n_samples: int = 0
    empty: bool = False

    def to_dict(self) -> Dict:
        return asdict(self)


@dataclass(frozen=True)
class TailSpec:
    kind: str  # abs_gt | radius_gt
    threshold: float
    side: str = "both"  # left | right | both

    def __post_init__(self):
        if self.kind not in ("abs_gt", "radius_gt"):
            raise DomainError(f"unknown tail kind {self.kind}")
        if self.side not in ("left", "right", "both"):
            raise DomainError(f"unknown tail side {self.side}")

    def mask(self, batch: np.ndarray) -> np.ndarray:
        x = batch[:, 0]
        if self.kind == "abs_gt":
            far = np.abs(x) > self.threshold
        else:
            far = np.sqrt(np.sum(batch[:, :2] ** 2, axis=1)) > self.threshold
        if self.side == "left":
            return far & (x < 0)
        if self.side == "right":
            return far & (x > 0)
        return far


def region_spec(name: str, dim: int) -> TailSpec | None:
    """None for the full sample, otherwise the tail predicate for 1-d or 2-d data."""
    if name not in REGIONS:
        raise DomainError(f"unknown region {name}; expected one of {REGIONS}")
    if name == "full":
        return None
    if dim not in TAIL_THRESHOLDS:
        raise DomainError(f"tail regions are defined for 1-d and 2-d data, got {dim}")
    kind = "abs_gt" if dim == 1 else "radius_gt"
    side = "both" if name == "tails" else name
    return TailSpec(kind, TAIL_THRESHOLDS[dim], side)


def tail_filter(batch, spec: TailSpec | None) -> np.ndarray:
    arr = as_batch(batch)
    if spec is None:
        return arr
    if spec.kind == "radius_gt" and arr.shape[1] < 2:
        raise ContractError("radius filters need 2-d data")
    return arr[spec.mask(arr)]


def median_bandwidth(a: np.ndarray, b: np.ndarray, rng: np.random.Generator, max_points: int = BANDWIDTH_POINTS) -> float:
    """Median pairwise distance of a pooled subsample."""
    pooled = np.concatenate([a, b], axis=0)
    if pooled.shape[0] > max_points:
        pooled = pooled[rng.choice(pooled.shape[0], size=max_points, replace=False)]
    med = float(np.median(pdist(pooled)))
    return med if med > 0 else 1.0


def _kernel(u: np.ndarray, v: np.ndarray, bandwidth: float) -> np.ndarray:
    return np.exp(-np.sum((u - v) ** 2, axis=1) / (2.0 * bandwidth**2))


def _linear_statistic(a: np.ndarray, b: np.ndarray, bandwidth: float) -> float:
    """Mean of h = k(x1,x2) + k(y1,y2) - k(x1,y2) - k(x2,y1) over disjoint consecutive pairs."""
    half = a.shape[0] // 2
    x1, x2 = a[0 : 2 * half : 2], a[1 : 2 * half : 2]
    y1, y2 = b[0 : 2 * half : 2], b[1 : 2 * half : 2]
    h = _kernel(x1, x2, bandwidth) + _kernel(y1, y2, bandwidth) - _kernel(x1, y2, bandwidth) - _kernel(x2, y1, bandwidth)
    return float(np.mean(h))


def mmd_linear_test(
    a,
    b,
    n_bootstrap: int = 1000,
    rng: np.random.Generator | None = None,
    bandwidth: float | None = None,
    region: str = "full",
    cap: int = SUBSAMPLE_CAP,
) -> MmdReport:
    """Linear-time MMD with a Gaussian kernel; p-value from permutations of the pooled sample."""
    a, b = as_batch(a), as_batch(b)
    if a.shape[1] != b.shape[1]:
        raise ContractError(f"samples have different dimensions: {a.shape[1]} vs {b.shape[1]}")
    if a.shape[0] < MIN_SAMPLES or b.shape[0] < MIN_SAMPLES:
        raise ContractError(f"need at least {MIN_SAMPLES} samples per group, got {a.shape[0]} and {b.shape[0]}")
    if n_bootstrap < 1:
        raise ContractError("n_bootstrap must be >= 1")
    rng = rng if rng is not None else np.random.default_rng(0)
    k = min(a.shape[0], b.shape[0], cap)
    if a.shape[0] > k:
        a = a[rng.choice(a.shape[0], size=k, replace=False)]
    if b.shape[0] > k:
        b = b[rng.choice(b.shape[0], size=k, replace=False)]
    bw = bandwidth if bandwidth is not None else median_bandwidth(a, b, rng)
    observed = _linear_statistic(a, b, bw)
    pooled = np.concatenate([a, b], axis=0)
    exceed = 0
    for _ in range(n_bootstrap):
        perm = rng.permutation(pooled.shape[0])
        if _linear_statistic(pooled[perm[:k]], pooled[perm[k:]], bw) >= observed:
            exceed += 1
    report = MmdReport(observed, exceed / n_bootstrap, bw, n_bootstrap, region, n_samples=k)
    logger.debug(f"MMD [{region}] n={k} stat={observed:.3e} p={report.p_value:.4f} bw={bw:.4g}")
    return report


def run_region_tests(
    generated,
    reference,
    regions: Sequence[str] = ("full", "left", "right"),
    n_bootstrap: int = 1000,
    seed: int = 0,
) -> List[MmdReport]:
    """One test per region; regions where either sample is too small come back flagged empty."""
    gen, ref = as_batch(generated), as_batch(reference)
    if gen.shape[1] != ref.shape[1]:
        raise ContractError(f"samples have different dimensions: {gen.shape[1]} vs {ref.shape[1]}")
    reports = []
    for i, name in enumerate(regions):
        spec = region_spec(name, gen.shape[1])
        g, r = tail_filter(gen, spec), tail_filter(ref, spec)
        if g.shape[0] < MIN_SAMPLES or r.shape[0] < MIN_SAMPLES:
            logger.warning(f"Region {name} is empty ({g.shape[0]} generated, {r.shape[0]} reference rows)")
            reports.append(MmdReport(None, None, None, n_bootstrap, name, n_samples=min(g.shape[0], r.shape[0]), empty=True))
            continue
        reports.append(mmd_linear_test(g, r, n_bootstrap, rng_stream(seed, i), region=name))
    return reports


@dataclass(frozen=True)
class HistogramTable:
    edges: np.ndarray
    counts: np.ndarray
    log10_density: np.ndarray  # -inf for empty bins
    underflow: int = 0
    overflow: int = 0

    @property
    def centers(self) -> np.ndarray:
        return 0.5 * (self.edges[:-1] + self.edges[1:])

    @property
    def total(self) -> int:
        return int(self.counts.sum()) + self.underflow + self.overflow

    def rows(self) -> List[list]:
        return [[float(c), int(n), float(d)] for c, n, d in zip(self.centers, self.counts, self.log10_density)]


HISTOGRAM_COLUMNS = ["bin_center", "count", "log10_density"]


def log_histogram(batch, bins: int, range: tuple[float, float] | None = None, column: int = 0) -> HistogramTable:
    """Histogram of one column with log10 density = log10(count / (rows * width)).

    Values outside `range` are tallied as underflow / overflow so the table
    accounts for every input row.
    """
    if bins < 2:
        raise DomainError(f"bins must be >= 2, got {bins}")
    x = as_batch(batch)[:, column]
    if range is not None:
        lo, hi = float(range[0]), float(range[1])
    elif x.size:
        lo, hi = float(x.min()), float(x.max())
    else:
        lo, hi = 0.0, 1.0
    if not hi > lo:
        hi = lo + 1.0
    edges = np.linspace(lo, hi, bins + 1)
    counts, _ = np.histogram(x, bins=edges)
    underflow = int(np.sum(x < lo))
    overflow = int(np.sum(x > hi))
    width = (hi - lo) / bins
    if x.size == 0:
        logger.warning("histogram of an empty batch; every bin is empty")
        dens = np.full(bins, -np.inf)
    else:
        with np.errstate(divide="ignore"):
            dens = np.log10(counts / (x.size * width))
    return HistogramTable(edges, counts, dens, underflow, overflow)


def reconstruction_report(model, batch, rng: np.random.Generator) -> Dict[str, float]:
    """Squared error of the decoder mean at an encoder draw, and of a full sampled reconstruction."""
    x = as_batch(batch)
    if x.shape[0] == 0:
        raise ContractError("reconstruction report needs at least one row")
    mse = model.reconstruction_mse(x, rng)
    sampled = float(np.mean(np.sum((x - model.reconstruct(x, rng)) ** 2, axis=1)))
    return {"rows": int(x.shape[0]), "recon_mse": mse, "recon_rmse": math.sqrt(mse), "sampled_mse": sampled}
