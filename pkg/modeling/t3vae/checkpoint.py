"""Checkpoint persistence: JSON with weights as 17-significant-digit decimal strings."""
from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Dict, Optional

import numpy as np
from loguru import logger

from .config import RunConfig
from .errors import CheckpointError
from .publish import write_json

FORMAT_VERSION = 1


def encode_array(a: np.ndarray) -> Dict:
    a = np.asarray(a, dtype=np.float64)
    return {"shape": list(a.shape), "values": [format(float(v), ".17g") for v in a.ravel()]}


def decode_array(d: Dict) -> np.ndarray:
    values = np.array([float(v) for v in d["values"]], dtype=np.float64)
    return values.reshape(tuple(d["shape"]))


@dataclass
class Checkpoint:
    config: RunConfig
    n: int
    weights: Dict[str, np.ndarray]
    best_val_loss: float
    epoch: int
    optimizer: Optional[Dict] = None
    version: int = FORMAT_VERSION

    def to_dict(self) -> Dict:
        return {
            "version": self.version,
            "config": json.loads(self.config.canonical_json()),
            "n": self.n,
            "epoch": self.epoch,
            "best_val_loss": format(self.best_val_loss, ".17g"),
            "weights": {k: encode_array(v) for k, v in sorted(self.weights.items())},
            "optimizer": self.optimizer,
        }

    @staticmethod
    def from_dict(d: Dict, source: str = "<checkpoint>") -> "Checkpoint":
        version = d.get("version")
        if version != FORMAT_VERSION:
            raise CheckpointError(f"{source}: unsupported checkpoint version {version!r} (expected {FORMAT_VERSION})")
        try:
            cfg = RunConfig.model_validate(d["config"])
            return Checkpoint(
                config=cfg,
                n=int(d["n"]),
                weights={k: decode_array(v) for k, v in d["weights"].items()},
                best_val_loss=float(d["best_val_loss"]),
                epoch=int(d["epoch"]),
                optimizer=d.get("optimizer"),
            )
        except (KeyError, TypeError, ValueError) as e:
            raise CheckpointError(f"{source}: malformed checkpoint: {e}") from e


def save_checkpoint(path: str, ckpt: Checkpoint) -> None:
    write_json(path, ckpt.to_dict())


def load_checkpoint(path: str) -> Checkpoint:
    try:
        with open(path, encoding="utf-8") as f:
            data = json.load(f)
    except json.JSONDecodeError as e:
        raise CheckpointError(f"{path}: not valid JSON: {e}") from e
    if not isinstance(data, dict):
        raise CheckpointError(f"{path}: checkpoint must be a JSON object")
    ckpt = Checkpoint.from_dict(data, source=path)
    logger.debug(f"Loaded checkpoint {path} (epoch {ckpt.epoch}, model {ckpt.config.model})")
    return ckpt
