from __future__ import annotations

import json
import os
from dataclasses import dataclass
from typing import List, Literal, Optional

import numpy as np
from dotenv import load_dotenv, find_dotenv
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from .errors import ConfigError

MODEL_KINDS = ("t3vae", "gaussian_vae", "beta_vae", "t3hvae", "gaussian_hvae")
HIERARCHICAL_KINDS = ("t3hvae", "gaussian_hvae")
HEAVY_TAILED_KINDS = ("t3vae", "t3hvae")


@dataclass(frozen=True)
class Settings:
    data_dir: str
    seed: int | None = None  # T3_SEED wins over any config/CLI seed
    log_level: str = "INFO"
    workers: int = 1

    @staticmethod
    def load() -> "Settings":
        # Load a .env file from the current working directory or its parents
        load_dotenv(find_dotenv(usecwd=True), override=False)
        seed = os.getenv("T3_SEED")
        try:
            return Settings(
                data_dir=os.getenv("T3_DATA_DIR", os.path.abspath(os.path.join(os.getcwd(), "data"))),
                seed=int(seed) if seed not in (None, "") else None,
                log_level=os.getenv("T3_LOG_LEVEL", "INFO").upper(),
                workers=max(1, int(os.getenv("T3_WORKERS", "1"))),
            )
        except ValueError as e:
            raise ConfigError(f"bad environment setting: {e}") from e

    def resolve_seed(self, seed: int | None) -> int:
        if self.seed is not None:
            return self.seed
        return 0 if seed is None else int(seed)


def rng_stream(seed: int, *keys: int) -> np.random.Generator:
    """Independent generator for (seed, keys...); same inputs give the same stream."""
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in keys)))


class RunConfig(BaseModel):
    """Training document read by `train`; unknown keys are rejected."""

    model_config = ConfigDict(extra="forbid")

    model: Literal["t3vae", "gaussian_vae", "beta_vae", "t3hvae", "gaussian_hvae"]
    nu: Optional[float] = None
    beta: float = 1.0
    n: Optional[int] = Field(default=None, ge=1)
    m: Optional[int] = Field(default=None, ge=1)
    m1: Optional[int] = Field(default=None, ge=1)
    m2: Optional[int] = Field(default=None, ge=1)
    sigma: float = Field(default=1.0, gt=0)
    sigma_z: float = Field(default=1.0, gt=0)
    sigma_x: float = Field(default=1.0, gt=0)
    hidden_sizes: List[int] = Field(default_factory=lambda: [64, 64])
    activation: Literal["leaky_relu"] = "leaky_relu"
    lr: float = Field(default=1e-3, gt=0)
    weight_decay: float = Field(default=1e-4, ge=0)
    batch_size: int = Field(default=128, ge=1)
    max_epochs: int = Field(default=80, ge=1)
    patience: int = Field(default=15, ge=1)
    mc_samples: int = Field(default=1, ge=1)
    seed: int = 0
    dataset: str = "univariate"
    split: Literal["paper", "quick"] = "quick"

    @field_validator("hidden_sizes")
    @classmethod
    def _positive_sizes(cls, v: List[int]) -> List[int]:
        if not v or any(h < 1 for h in v):
            raise ValueError("hidden_sizes must be a non-empty list of positive ints")
        return v

    @field_validator("beta")
    @classmethod
    def _non_negative_beta(cls, v: float) -> float:
        if v < 0:
            raise ValueError("beta must be >= 0")
        return v

    @model_validator(mode="after")
    def _check_kind(self) -> "RunConfig":
        if self.model in HEAVY_TAILED_KINDS:
            if self.nu is None or not self.nu > 2:
                raise ValueError(f"{self.model} requires nu > 2")
        if self.model == "gaussian_vae" and self.beta != 1.0:
            raise ValueError("gaussian_vae uses beta = 1; use beta_vae for other weights")
        if self.model in HIERARCHICAL_KINDS and self.m1 is None:
            raise ValueError(f"{self.model} requires m1")
        return self

    @property
    def hierarchical(self) -> bool:
        return self.model in HIERARCHICAL_KINDS

    def latent_dims(self, n: int) -> tuple[int, ...]:
        """(m,) for flat models, (m1, m2) for hierarchical; m defaults to n, m2 to m1 // 2."""
        if self.hierarchical:
            m1 = int(self.m1)
            return m1, int(self.m2 if self.m2 is not None else max(1, m1 // 2))
        return (int(self.m if self.m is not None else n),)

    def canonical_json(self) -> str:
        return json.dumps(self.model_dump(mode="json"), sort_keys=True, separators=(",", ":"))

    @staticmethod
    def from_json(text: str, source: str = "<config>") -> "RunConfig":
        try:
            return RunConfig.model_validate_json(text)
        except ValidationError as e:
            raise ConfigError(f"{source}: {e}") from e

    @staticmethod
    def load(path: str) -> "RunConfig":
        with open(path, encoding="utf-8") as f:
            return RunConfig.from_json(f.read(), source=path)
