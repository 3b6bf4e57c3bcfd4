from __future__ import annotations

import math
import os
import time
from dataclasses import dataclass, field
from typing import Dict, List, Sequence

import numpy as np
from loguru import logger

from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .config import RunConfig, Settings, rng_stream
from .data import DATASETS, SPLIT_PRESETS, generate_dataset, read_csv, read_splits, split, write_csv, write_splits
from .errors import ConfigError, ContractError, TrainingDivergenceError
from .evaluate import HISTOGRAM_COLUMNS, log_histogram, run_region_tests
from .hvae import HierarchicalVAE
from .models import HierConfig, ModelConfig
from .nn import AdamState, adam_step, zero_grad
from .publish import write_json, write_jsonl, write_table
from .vae import VAE

# substream keys under the run seed
INIT_KEY, SHUFFLE_KEY, TRAIN_NOISE_KEY, VAL_KEY, GENERATE_KEY, SPLIT_KEY = range(6)
GENERATE_CHUNK = 100_000
TRAINING_LOG_COLUMNS = ["epoch", "train_loss", "val_loss", "val_recon", "wall_time"]


def model_config(cfg: RunConfig, n: int):
    """ModelConfig or HierConfig for data of dimension n."""
    if cfg.n is not None and cfg.n != n:
        raise ConfigError(f"config says n={cfg.n} but the data has {n} columns")
    nu = cfg.nu if cfg.model in ("t3vae", "t3hvae") else math.inf
    if cfg.hierarchical:
        m1, m2 = cfg.latent_dims(n)
        kind = "t3hvae" if cfg.model == "t3hvae" else "gaussian_hvae"
        return HierConfig(n=n, m1=m1, m2=m2, nu=nu, sigma_z=cfg.sigma_z, sigma_x=cfg.sigma_x, kind=kind, mc_samples=cfg.mc_samples)
    (m,) = cfg.latent_dims(n)
    return ModelConfig(n=n, m=m, nu=nu, sigma=cfg.sigma, beta=cfg.beta, kind=cfg.model, mc_samples=cfg.mc_samples)


def build_model(cfg: RunConfig, n: int, rng: np.random.Generator):
    mcfg = model_config(cfg, n)
    if isinstance(mcfg, HierConfig):
        return HierarchicalVAE(mcfg, cfg.hidden_sizes, rng)
    return VAE(mcfg, cfg.hidden_sizes, rng)


def evaluate_loss(model, data: np.ndarray, batch_size: int, rng: np.random.Generator) -> tuple[float, float]:
    """Row-weighted mean of (loss, reconstruction term) over `data` in batches."""
    if data.shape[0] == 0:
        raise ContractError("cannot evaluate the loss on an empty split")
    total, recon = 0.0, 0.0
    for start in range(0, data.shape[0], batch_size):
        chunk = data[start:start + batch_size]
        terms = model.loss(chunk, rng)
        total += float(terms.total.value) * chunk.shape[0]
        recon += terms.reconstruction * chunk.shape[0]
    return total / data.shape[0], recon / data.shape[0]


@dataclass
class TrainingOutcome:
    best_state: Dict[str, np.ndarray]
    best_val_loss: float
    best_epoch: int
    epochs_run: int
    optimizer: AdamState
    log: List[list] = field(default_factory=list)


def train_model(model, train: np.ndarray, val: np.ndarray, cfg: RunConfig, seed: int) -> TrainingOutcome:
    """Adam on shuffled mini-batches; early stopping on the validation loss of the model's own objective."""
    params = model.parameters()
    opt = AdamState.for_params(params, lr=cfg.lr, weight_decay=cfg.weight_decay)
    shuffle_rng = rng_stream(seed, SHUFFLE_KEY)
    noise_rng = rng_stream(seed, TRAIN_NOISE_KEY)
    best_val, best_epoch, best_state = math.inf, 0, model.state_dict()
    wait = 0
    log: List[list] = []
    started = time.perf_counter()
    epoch = 0
    for epoch in range(1, cfg.max_epochs + 1):
        order = shuffle_rng.permutation(train.shape[0])
        running, seen = 0.0, 0
        for b, start in enumerate(range(0, train.shape[0], cfg.batch_size)):
            batch = train[order[start:start + cfg.batch_size]]
            zero_grad(params)
            try:
                terms = model.loss(batch, noise_rng, batch_index=b)
            except TrainingDivergenceError as e:
                raise TrainingDivergenceError("non-finite training loss", batch_index=e.batch_index, epoch=epoch) from e
            terms.total.backward()
            adam_step(opt, params)
            running += float(terms.total.value) * batch.shape[0]
            seen += batch.shape[0]
        train_loss = running / seen
        # fixed validation noise so epochs compare on the same draws
        val_loss, val_recon = evaluate_loss(model, val, cfg.batch_size, rng_stream(seed, VAL_KEY))
        wall = time.perf_counter() - started
        log.append([epoch, train_loss, val_loss, val_recon, wall])
        logger.info(f"epoch {epoch}: train {train_loss:.6f} val {val_loss:.6f} recon {val_recon:.6f} ({wall:.1f}s)")
        if val_loss < best_val:
            best_val, best_epoch, best_state, wait = val_loss, epoch, model.state_dict(), 0
        else:
            wait += 1
            if wait >= cfg.patience:
                logger.info(f"Early stop at epoch {epoch}; best epoch {best_epoch} (val {best_val:.6f})")
                break
    return TrainingOutcome(best_state, best_val, best_epoch, epoch, opt, log)


class Pipeline:
    def __init__(self, settings: Settings):
        self.settings = settings

    # -- data ------------------------------------------------------------------

    def gen_data(self, dataset: str, out: str, count: int | None = None, seed: int | None = None, preset: str | None = None) -> Dict[str, str]:
        seed = self.settings.resolve_seed(seed)
        if preset:
            return write_splits(out, dataset, preset, seed, workers=self.settings.workers)
        if count is None:
            raise ConfigError("gen-data needs --count or --preset")
        write_csv(out, generate_dataset(dataset, count, seed, workers=self.settings.workers))
        return {"data": out}

    def _load_training_data(self, cfg: RunConfig, data_dir: str, seed: int) -> Dict[str, np.ndarray]:
        if cfg.dataset in DATASETS:
            if not os.path.exists(os.path.join(data_dir, "train.csv")):
                logger.info(f"No splits in {data_dir}; generating {cfg.dataset} ({cfg.split} preset)")
                write_splits(data_dir, cfg.dataset, cfg.split, seed, workers=self.settings.workers)
            return read_splits(data_dir)
        data = read_csv(cfg.dataset)
        parts = split(data, SPLIT_PRESETS[cfg.split], rng_stream(seed, SPLIT_KEY))
        return dict(zip(("train", "val", "test"), parts))

    # -- training ------------------------------------------------------------------

    def train(self, config_path: str, data_dir: str | None, out_dir: str) -> Checkpoint:
        cfg = RunConfig.load(config_path)
        if self.settings.seed is not None:
            cfg = cfg.model_copy(update={"seed": self.settings.seed})
        seed = cfg.seed
        splits = self._load_training_data(cfg, data_dir or self.settings.data_dir, seed)
        train, val = splits["train"], splits["val"]
        n = train.shape[1]
        model = build_model(cfg, n, rng_stream(seed, INIT_KEY))
        logger.info(f"Training {cfg.model} on {train.shape[0]} rows (n={n}, val {val.shape[0]})")
        outcome = train_model(model, train, val, cfg, seed)
        ckpt = Checkpoint(
            config=cfg,
            n=n,
            weights=outcome.best_state,
            best_val_loss=outcome.best_val_loss,
            epoch=outcome.best_epoch,
            optimizer=outcome.optimizer.to_dict(),
        )
        save_checkpoint(os.path.join(out_dir, "checkpoint.json"), ckpt)
        write_table(os.path.join(out_dir, "training_log.csv"), TRAINING_LOG_COLUMNS, outcome.log)
        return ckpt

    @staticmethod
    def restore(ckpt: Checkpoint):
        model = build_model(ckpt.config, ckpt.n, rng_stream(ckpt.config.seed, INIT_KEY))
        model.load_state_dict(ckpt.weights)
        return model

    def validation_loss(self, ckpt: Checkpoint, val: np.ndarray) -> float:
        model = self.restore(ckpt)
        loss, _ = evaluate_loss(model, val, ckpt.config.batch_size, rng_stream(ckpt.config.seed, VAL_KEY))
        return loss

    # -- generation / evaluation ---------------------------------------------------

    def generate(self, checkpoint_path: str, count: int, out: str, seed: int | None = None) -> np.ndarray:
        if count < 1:
            raise ContractError(f"count must be >= 1, got {count}")
        ckpt = load_checkpoint(checkpoint_path)
        model = self.restore(ckpt)
        seed = self.settings.resolve_seed(seed)
        chunks = []
        for i, start in enumerate(range(0, count, GENERATE_CHUNK)):
            size = min(GENERATE_CHUNK, count - start)
            chunks.append(model.generate(size, rng_stream(seed, GENERATE_KEY, i)))
        samples = np.concatenate(chunks, axis=0)
        write_csv(out, samples)
        prior = model.generation_prior()
        write_json(
            f"{out}.meta.json",
            {
                "model": ckpt.config.model,
                "count": count,
                "seed": seed,
                "latent_prior": {
                    "df": prior["df"] if math.isfinite(prior["df"]) else None,
                    "scale": prior["scale"],
                },
            },
        )
        logger.info(f"Generated {count} samples with {ckpt.config.model} (z prior df={prior['df']}, scale={prior['scale']:.6g})")
        return samples

    def evaluate(
        self,
        generated_path: str,
        reference_path: str,
        out: str,
        regions: Sequence[str] = ("full", "left", "right"),
        n_bootstrap: int = 1000,
        seed: int | None = None,
    ) -> list:
        seed = self.settings.resolve_seed(seed)
        reports = run_region_tests(read_csv(generated_path), read_csv(reference_path), regions, n_bootstrap, seed)
        write_jsonl(out, (r.to_dict() for r in reports))
        return reports

    def hist(self, in_path: str, out: str, bins: int, value_range: tuple[float, float] | None = None, column: int = 0):
        table = log_histogram(read_csv(in_path), bins, value_range, column=column)
        write_table(out, HISTOGRAM_COLUMNS, table.rows())
        if table.underflow or table.overflow:
            logger.info(f"{table.underflow} rows below and {table.overflow} rows above the histogram range")
        return table
