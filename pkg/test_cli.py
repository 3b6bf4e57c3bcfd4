"""End-to-end runs of the command line: gen-data, train, generate, eval, hist."""
import json
import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.join(os.path.dirname(__file__), 'modeling'))

import t3vae.data as data
from t3vae.checkpoint import load_checkpoint
from t3vae.config import RunConfig, Settings, rng_stream
from t3vae.data import SPLIT_PRESETS, read_csv, split
from t3vae.errors import ContractError
from t3vae.main import main
from t3vae.models import ModelConfig
from t3vae.pipeline import SPLIT_KEY, TRAINING_LOG_COLUMNS, Pipeline, evaluate_loss
from t3vae.publish import read_table
from t3vae.vae import VAE, derive_constants


@pytest.fixture(autouse=True)
def clean_env(monkeypatch):
    for key in ("T3_SEED", "T3_DATA_DIR", "T3_LOG_LEVEL", "T3_WORKERS"):
        monkeypatch.delenv(key, raising=False)


def _read_bytes(path):
    with open(path, "rb") as f:
        return f.read()


def _write_config(path, **fields):
    doc = {"model": "t3vae", "nu": 18, "hidden_sizes": [4], "batch_size": 32, "max_epochs": 3, "patience": 2}
    doc.update(fields)
    with open(path, "w", encoding="utf-8") as f:
        json.dump(doc, f)
    return str(path)


@pytest.fixture
def trained(tmp_path):
    csv = str(tmp_path / "data.csv")
    assert main(["gen-data", "--dataset", "univariate", "--count", "300", "--seed", "2", "--out", csv]) == 0
    cfg = _write_config(tmp_path / "cfg.json", dataset=csv, seed=4)
    out = str(tmp_path / "run")
    assert main(["train", "--config", cfg, "--out", out]) == 0
    return {"csv": csv, "config": cfg, "out": out, "checkpoint": os.path.join(out, "checkpoint.json")}


def test_gen_data_is_deterministic(tmp_path):
    a, b = str(tmp_path / "a.csv"), str(tmp_path / "b.csv")
    assert main(["gen-data", "--dataset", "univariate", "--count", "1000", "--seed", "7", "--out", a]) == 0
    assert main(["gen-data", "--dataset", "univariate", "--count", "1000", "--seed", "7", "--out", b]) == 0
    assert _read_bytes(a) == _read_bytes(b)
    assert read_csv(a).shape == (1000, 1)


def test_gen_data_bivariate_has_two_columns(tmp_path):
    out = str(tmp_path / "bi.csv")
    assert main(["gen-data", "--dataset", "bivariate", "--count", "50", "--out", out]) == 0
    assert read_csv(out).shape == (50, 2)


def test_gen_data_preset_writes_three_splits(tmp_path, monkeypatch):
    monkeypatch.setitem(data.SPLIT_PRESETS, "tiny", (30, 20, 50))
    out = str(tmp_path / "splits")
    assert main(["gen-data", "--dataset", "univariate", "--preset", "tiny", "--out", out]) == 0
    assert [read_csv(os.path.join(out, f"{k}.csv")).shape[0] for k in ("train", "val", "test")] == [30, 20, 50]


def test_gen_data_needs_count_or_preset(tmp_path):
    assert main(["gen-data", "--dataset", "univariate", "--out", str(tmp_path / "x.csv")]) == 2


def test_env_seed_overrides_flag(tmp_path, monkeypatch):
    a, b = str(tmp_path / "a.csv"), str(tmp_path / "b.csv")
    monkeypatch.setenv("T3_SEED", "5")
    assert main(["gen-data", "--dataset", "univariate", "--count", "100", "--seed", "1", "--out", a]) == 0
    monkeypatch.delenv("T3_SEED")
    assert main(["gen-data", "--dataset", "univariate", "--count", "100", "--seed", "5", "--out", b]) == 0
    assert _read_bytes(a) == _read_bytes(b)


def test_train_writes_checkpoint_and_log(trained):
    rows = read_table(os.path.join(trained["out"], "training_log.csv"))
    assert list(rows[0]) == TRAINING_LOG_COLUMNS
    assert 1 <= len(rows) <= 3
    assert [int(r["epoch"]) for r in rows] == list(range(1, len(rows) + 1))
    ckpt = load_checkpoint(trained["checkpoint"])
    assert ckpt.version == 1 and ckpt.n == 1
    assert ckpt.best_val_loss == min(float(r["val_loss"]) for r in rows)


def test_checkpoint_echoes_config(trained):
    ckpt = load_checkpoint(trained["checkpoint"])
    assert ckpt.config.canonical_json() == RunConfig.load(trained["config"]).canonical_json()
    with open(trained["checkpoint"], encoding="utf-8") as f:
        raw = json.load(f)
    assert raw["config"] == json.loads(RunConfig.load(trained["config"]).canonical_json())


def test_reloaded_checkpoint_reproduces_validation_loss(trained):
    ckpt = load_checkpoint(trained["checkpoint"])
    parts = split(read_csv(trained["csv"]), SPLIT_PRESETS["quick"], rng_stream(ckpt.config.seed, SPLIT_KEY))
    val_loss = Pipeline(Settings.load()).validation_loss(ckpt, parts[1])
    assert val_loss == pytest.approx(ckpt.best_val_loss, abs=1e-12)


def test_generate_is_deterministic_and_records_prior(trained, tmp_path):
    a, b = str(tmp_path / "g1.csv"), str(tmp_path / "g2.csv")
    assert main(["generate", "--checkpoint", trained["checkpoint"], "--count", "150", "--seed", "3", "--out", a]) == 0
    assert main(["generate", "--checkpoint", trained["checkpoint"], "--count", "150", "--seed", "3", "--out", b]) == 0
    assert read_csv(a).shape == (150, 1)
    assert _read_bytes(a) == _read_bytes(b)
    with open(f"{a}.meta.json", encoding="utf-8") as f:
        meta = json.load(f)
    assert meta["model"] == "t3vae"
    assert meta["latent_prior"]["df"] == 19.0
    tau2 = derive_constants(ModelConfig(n=1, m=1, nu=18.0)).tau2
    assert meta["latent_prior"]["scale"] == pytest.approx(tau2)


def test_eval_and_hist(trained, tmp_path):
    gen = str(tmp_path / "g.csv")
    assert main(["generate", "--checkpoint", trained["checkpoint"], "--count", "400", "--out", gen]) == 0
    report = str(tmp_path / "mmd.jsonl")
    assert main(["eval", "--generated", gen, "--reference", gen, "--bootstrap", "20", "--out", report]) == 0
    with open(report, encoding="utf-8") as f:
        lines = [json.loads(line) for line in f]
    assert [r["region"] for r in lines] == ["full", "left", "right"]
    assert lines[0]["statistic"] == pytest.approx(0.0, abs=1e-12)

    hist = str(tmp_path / "hist.csv")
    assert main(["hist", "--in", gen, "--bins", "10", "--range=-5,5", "--out", hist]) == 0
    rows = read_table(hist)
    assert len(rows) == 10
    assert list(rows[0]) == ["bin_center", "count", "log10_density"]


def test_train_generates_missing_splits(tmp_path):
    cfg = _write_config(tmp_path / "cfg.json", max_epochs=1, batch_size=1024, dataset="univariate")
    data_dir = str(tmp_path / "data")
    out = str(tmp_path / "run")
    assert main(["train", "--config", cfg, "--data-dir", data_dir, "--out", out]) == 0
    assert os.path.exists(os.path.join(data_dir, "train.csv"))
    assert os.path.exists(os.path.join(out, "checkpoint.json"))


def test_exit_codes(tmp_path, monkeypatch):
    bad_cfg = _write_config(tmp_path / "bad.json", learning_rate=0.1)
    assert main(["train", "--config", bad_cfg, "--out", str(tmp_path / "r")]) == 2
    missing = str(tmp_path / "nope.json")
    assert main(["generate", "--checkpoint", missing, "--count", "5", "--out", str(tmp_path / "g.csv")]) == 4
    old = tmp_path / "old.json"
    old.write_text(json.dumps({"version": 99}), encoding="utf-8")
    assert main(["generate", "--checkpoint", str(old), "--count", "5", "--out", str(tmp_path / "g.csv")]) == 4
    monkeypatch.setenv("T3_SEED", "abc")
    assert main(["gen-data", "--dataset", "univariate", "--count", "5", "--out", str(tmp_path / "x.csv")]) == 2


def test_bad_data_file_is_io_error(tmp_path):
    csv = tmp_path / "broken.csv"
    csv.write_text("x0\n1.0\nnan\n", encoding="utf-8")
    cfg = _write_config(tmp_path / "cfg.json", dataset=str(csv))
    assert main(["train", "--config", cfg, "--out", str(tmp_path / "r")]) == 4


def test_gen_data_full_size_preset_name(tmp_path, monkeypatch):
    monkeypatch.setitem(data.SPLIT_PRESETS, "paper", (40, 40, 100))
    out = str(tmp_path / "splits")
    assert main(["gen-data", "--dataset", "bivariate", "--preset", "paper", "--seed", "1", "--out", out]) == 0
    assert [read_csv(os.path.join(out, f"{k}.csv")).shape for k in ("train", "val", "test")] == [(40, 2), (40, 2), (100, 2)]
    assert RunConfig.from_json('{"model": "t3vae", "nu": 18, "split": "paper"}').split == "paper"


def test_generate_rejects_non_positive_count_before_loading(tmp_path):
    missing = str(tmp_path / "nope.json")
    assert main(["generate", "--checkpoint", missing, "--count", "0", "--out", str(tmp_path / "g.csv")]) == 2
    with pytest.raises(ContractError):
        Pipeline(Settings.load()).generate(missing, -3, str(tmp_path / "g.csv"))
    assert not os.path.exists(tmp_path / "g.csv")


def test_evaluate_loss_on_empty_split():
    model = VAE(ModelConfig(n=1, m=1, nu=10.0), [4], np.random.default_rng(0))
    with pytest.raises(ContractError):
        evaluate_loss(model, np.zeros((0, 1)), 32, np.random.default_rng(1))
    loss, recon = evaluate_loss(model, np.zeros((5, 1)), 2, np.random.default_rng(1))
    assert np.isfinite(loss) and np.isfinite(recon)
