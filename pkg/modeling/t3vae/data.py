"""Synthetic heavy-tailed datasets, splitting and CSV persistence."""
from __future__ import annotations

import csv
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Dict, Sequence, Tuple

import numpy as np
from loguru import logger
from scipy import stats
from scipy.special import logsumexp

from .config import rng_stream
from .errors import ContractError, DataFormatError, DomainError
from .models import TParams
from .tdist import sample

DATASETS = ("univariate", "bivariate")
SPLIT_PRESETS: Dict[str, Tuple[int, int, int]] = {
    "paper": (200_000, 200_000, 500_000),
    "quick": (20_000, 20_000, 50_000),
}
SPLIT_NAMES = ("train", "val", "test")
BIVARIATE_NOISE_DF = 6.0
NOISE_MODES = ("pair", "y", "none")
# substream key for the shuffled split, distinct from generation chunk indices
_SPLIT_KEY = 1 << 30


@dataclass(frozen=True)
class MixtureComponent:
    weight: float
    loc: float
    scale: float  # t scale, i.e. the square root of the scale "variance"
    df: float


@dataclass(frozen=True)
class MixtureSpec:
    components: Tuple[MixtureComponent, ...]

    def __post_init__(self):
        if not self.components:
            raise DomainError("a mixture needs at least one component")
        weights = np.array([c.weight for c in self.components])
        if np.any(weights <= 0) or abs(weights.sum() - 1.0) > 1e-12:
            raise DomainError(f"mixture weights must be positive and sum to 1, got {weights.tolist()}")
        if any(c.scale <= 0 or c.df <= 0 for c in self.components):
            raise DomainError("component scales and dfs must be > 0")

    @property
    def weights(self) -> np.ndarray:
        return np.array([c.weight for c in self.components])

    def mean(self) -> float:
        if any(c.df <= 1 for c in self.components):
            raise DomainError("mixture mean undefined for df <= 1")
        return float(sum(c.weight * c.loc for c in self.components))


UNIVARIATE = MixtureSpec((MixtureComponent(0.6, -2.0, 1.0, 5.0), MixtureComponent(0.4, 2.0, 1.0, 5.0)))
BIVARIATE_X = MixtureSpec((MixtureComponent(0.7, -2.0, 2.0, 5.0), MixtureComponent(0.3, 2.0, 2.0, 5.0)))


def as_batch(values) -> np.ndarray:
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr.reshape(-1, 1)
    if arr.ndim != 2:
        raise ContractError(f"a batch is a 2-d array, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise DomainError("batch contains non-finite values")
    return arr


def mixture_log_density(spec: MixtureSpec, x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    parts = np.stack(
        [math.log(c.weight) + stats.t.logpdf(x, df=c.df, loc=c.loc, scale=c.scale) for c in spec.components]
    )
    return logsumexp(parts, axis=0)


def sample_mixture(spec: MixtureSpec, count: int, rng: np.random.Generator, return_labels: bool = False):
    """Component indicator first, then a Gaussian / chi-square compound draw from that component."""
    if count < 1:
        raise ContractError(f"count must be >= 1, got {count}")
    labels = rng.choice(len(spec.components), size=count, p=spec.weights)
    loc = np.array([c.loc for c in spec.components])[labels]
    scale = np.array([c.scale for c in spec.components])[labels]
    df = np.array([c.df for c in spec.components])[labels]
    z = rng.standard_normal(count)
    v = rng.chisquare(df)
    x = loc + scale * z / np.sqrt(v / df)
    return (x, labels) if return_labels else x


def gen_univariate(count: int, rng: np.random.Generator) -> np.ndarray:
    """0.6 t1(-2, 1, 5) + 0.4 t1(2, 1, 5) as a (count, 1) batch."""
    return sample_mixture(UNIVARIATE, count, rng).reshape(-1, 1)


def gen_bivariate(count: int, rng: np.random.Generator, noise: str = "pair") -> np.ndarray:
    """x from 0.7 t1(-2, 4, 5) + 0.3 t1(2, 4, 5), y = x + 2 sin(pi x / 4), plus t2(0, I, 6) noise.

    noise="pair" perturbs (x, y), "y" only the y coordinate, "none" leaves the curve exact.
    """
    if noise not in NOISE_MODES:
        raise DomainError(f"noise must be one of {NOISE_MODES}, got {noise}")
    x = sample_mixture(BIVARIATE_X, count, rng)
    out = np.column_stack([x, x + 2.0 * np.sin(math.pi * x / 4.0)])
    if noise == "none":
        return out
    eps = sample(TParams(np.zeros(2), 1.0, BIVARIATE_NOISE_DF), count, rng)
    if noise == "y":
        eps[:, 0] = 0.0
    return out + eps


_GENERATORS = {"univariate": gen_univariate, "bivariate": gen_bivariate}


def generate_dataset(name: str, count: int, seed: int, chunk_size: int = 100_000, workers: int = 1) -> np.ndarray:
    """Chunked generation; chunk i draws from its own substream, chunks are concatenated in order."""
    if name not in _GENERATORS:
        raise DomainError(f"unknown dataset {name}; expected one of {DATASETS}")
    if count < 1:
        raise ContractError(f"count must be >= 1, got {count}")
    gen = _GENERATORS[name]
    sizes = [min(chunk_size, count - start) for start in range(0, count, chunk_size)]

    def run(i: int) -> np.ndarray:
        return gen(sizes[i], rng_stream(seed, i))

    if workers > 1 and len(sizes) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            chunks = list(pool.map(run, range(len(sizes))))
    else:
        chunks = [run(i) for i in range(len(sizes))]
    logger.debug(f"Generated {count} {name} rows in {len(sizes)} chunks")
    return np.concatenate(chunks, axis=0)


def split_sizes(total: int, ratios: Sequence[float]) -> list[int]:
    """Largest-remainder apportionment of `total` rows to `ratios`."""
    r = np.asarray(ratios, dtype=np.float64)
    if r.ndim != 1 or r.size == 0 or np.any(r <= 0):
        raise DomainError(f"ratios must be positive, got {list(ratios)}")
    exact = total * r / r.sum()
    sizes = np.floor(exact).astype(int)
    order = np.argsort(-(exact - sizes), kind="stable")
    for i in order[: total - int(sizes.sum())]:
        sizes[i] += 1
    return sizes.tolist()


def split(batch, ratios: Sequence[float], rng: np.random.Generator) -> tuple[np.ndarray, ...]:
    """Shuffle rows with `rng`, then cut into consecutive parts sized by `ratios`."""
    arr = as_batch(batch)
    sizes = split_sizes(arr.shape[0], ratios)
    perm = rng.permutation(arr.shape[0])
    bounds = np.cumsum(sizes)[:-1]
    return tuple(arr[idx] for idx in np.split(perm, bounds))


def write_csv(path: str, batch) -> None:
    arr = as_batch(batch)
    parent = os.path.dirname(path)
    if parent:
        os.makedirs(parent, exist_ok=True)
    header = ",".join(f"x{i}" for i in range(arr.shape[1]))
    np.savetxt(path, arr, fmt="%.17g", delimiter=",", header=header, comments="", encoding="utf-8")
    logger.info(f"Wrote {path} ({arr.shape[0]} rows)")


def read_csv(path: str) -> np.ndarray:
    with open(path, encoding="utf-8", newline="") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if not header:
            raise DataFormatError(path, 1, "missing header row")
        expected = [f"x{i}" for i in range(len(header))]
        if [h.strip() for h in header] != expected:
            raise DataFormatError(path, 1, f"header must be {','.join(expected)}")
        rows = []
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise DataFormatError(path, line_no, f"expected {len(header)} fields, got {len(row)}")
            try:
                values = [float(v) for v in row]
            except ValueError as e:
                raise DataFormatError(path, line_no, str(e)) from e
            if not all(math.isfinite(v) for v in values):
                raise DataFormatError(path, line_no, "non-finite value")
            rows.append(values)
    return np.array(rows, dtype=np.float64).reshape(-1, len(header))


def write_splits(out_dir: str, dataset: str, preset: str, seed: int, workers: int = 1) -> Dict[str, str]:
    if preset not in SPLIT_PRESETS:
        raise DomainError(f"unknown preset {preset}; expected one of {sorted(SPLIT_PRESETS)}")
    sizes = SPLIT_PRESETS[preset]
    data = generate_dataset(dataset, sum(sizes), seed, workers=workers)
    parts = split(data, sizes, rng_stream(seed, _SPLIT_KEY))
    paths = {}
    for name, part in zip(SPLIT_NAMES, parts):
        paths[name] = os.path.join(out_dir, f"{name}.csv")
        write_csv(paths[name], part)
    return paths


def read_splits(data_dir: str) -> Dict[str, np.ndarray]:
    return {name: read_csv(os.path.join(data_dir, f"{name}.csv")) for name in SPLIT_NAMES}
