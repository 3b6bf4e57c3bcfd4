"""Run configuration documents and environment settings."""
import json
import os
import sys

import pytest

sys.path.insert(0, os.path.join(os.path.dirname(__file__), 'modeling'))

from t3vae.config import RunConfig, Settings, rng_stream
from t3vae.errors import ConfigError
from t3vae.models import HierConfig, ModelConfig
from t3vae.pipeline import model_config


def test_defaults():
    cfg = RunConfig.from_json('{"model": "t3vae", "nu": 18}')
    assert cfg.hidden_sizes == [64, 64]
    assert (cfg.lr, cfg.weight_decay, cfg.batch_size) == (1e-3, 1e-4, 128)
    assert (cfg.max_epochs, cfg.patience, cfg.mc_samples) == (80, 15, 1)
    assert cfg.activation == "leaky_relu"
    assert cfg.latent_dims(3) == (3,)


@pytest.mark.parametrize(
    "doc",
    [
        '{"model": "t3vae", "nu": 18, "learning_rate": 0.1}',
        '{"model": "t3vae"}',
        '{"model": "t3vae", "nu": 2}',
        '{"model": "gaussian_vae", "beta": 0.5}',
        '{"model": "t3hvae", "nu": 10}',
        '{"model": "vae"}',
        '{"model": "beta_vae", "hidden_sizes": []}',
        'not json',
    ],
)
def test_invalid_documents_raise_config_error(doc):
    with pytest.raises(ConfigError):
        RunConfig.from_json(doc)


def test_canonical_json_is_sorted_and_stable():
    a = RunConfig.from_json('{"nu": 18, "model": "t3vae", "seed": 3}')
    b = RunConfig.from_json(a.canonical_json())
    assert a.canonical_json() == b.canonical_json()
    keys = list(json.loads(a.canonical_json()))
    assert keys == sorted(keys)


def test_model_config_conversion():
    flat = model_config(RunConfig.from_json('{"model": "beta_vae", "beta": 0.0, "m": 2}'), 3)
    assert isinstance(flat, ModelConfig) and (flat.n, flat.m, flat.beta) == (3, 2, 0.0)
    assert flat.nu == float("inf")
    hier = model_config(RunConfig.from_json('{"model": "t3hvae", "nu": 10, "m1": 4}'), 2)
    assert isinstance(hier, HierConfig) and (hier.m1, hier.m2) == (4, 2)
    with pytest.raises(ConfigError):
        model_config(RunConfig.from_json('{"model": "t3vae", "nu": 5, "n": 2}'), 1)


def test_settings_from_environment(monkeypatch):
    monkeypatch.setenv("T3_SEED", "42")
    monkeypatch.setenv("T3_LOG_LEVEL", "debug")
    monkeypatch.setenv("T3_WORKERS", "0")
    s = Settings.load()
    assert s.seed == 42 and s.log_level == "DEBUG" and s.workers == 1
    assert s.resolve_seed(7) == 42
    monkeypatch.delenv("T3_SEED")
    assert Settings.load().resolve_seed(7) == 7
    monkeypatch.setenv("T3_SEED", "abc")
    with pytest.raises(ConfigError):
        Settings.load()


def test_rng_streams_are_reproducible_and_distinct():
    a = rng_stream(1, 0).standard_normal(5)
    b = rng_stream(1, 0).standard_normal(5)
    c = rng_stream(1, 1).standard_normal(5)
    assert (a == b).all()
    assert not (a == c).all()
