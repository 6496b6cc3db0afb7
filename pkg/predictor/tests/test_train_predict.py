import csv
import json

import numpy as np
import pytest
import torch

from flowpred.model import NetworkSpec
from flowpred.predict import predict_pairs, write_predictions
from flowpred.train import TrainConfig, train

SMALL = NetworkSpec(in_size=(32, 32), stream_channels=(4, 8), fusion_channels=(8,),
                    fc_features=8)


def _rows(n, alpha_fn, seed=0, size=32):
    rng = np.random.default_rng(seed)
    rows = []
    for i in range(n):
        a = alpha_fn(i, rng)
        # deformation-magnitude proxy: noise amplitude scales with 1/alpha
        base = rng.normal(0, 1, (size, size)).astype(np.float32)
        tgt = base + (1.0 / a) * rng.normal(0, 1, (size, size)).astype(np.float32)
        rows.append((i, base, tgt, float(a)))
    return rows


def test_constant_target_learned(tmp_path):
    rows = _rows(24, lambda i, rng: 5.0)
    # tiny corpus means one optimizer step per epoch; compensate with a
    # hotter learning rate than the production default
    cfg = TrainConfig(learning_rate=1e-2, batch_size=8,
                      max_epochs=150, patience=150, seed=0)
    model, best_val = train(None, SMALL, cfg, out_dir=tmp_path,
                            train_rows=rows[:16], val_rows=rows[16:])
    preds = predict_pairs(model, [(r[0], r[1], r[2]) for r in rows[16:]])
    mae = float(np.mean([abs(p - 5.0) for _, p in preds]))
    assert mae < 0.5, mae


def test_overfit_small_corpus(tmp_path):
    rows = _rows(16, lambda i, rng: [0.5, 2.0, 8.0, 16.0][i % 4])
    cfg = TrainConfig(learning_rate=1e-2, batch_size=4,
                      max_epochs=400, patience=400, seed=1)
    model, _ = train(None, SMALL, cfg, out_dir=tmp_path,
                     train_rows=rows, val_rows=rows)
    preds = predict_pairs(model, [(r[0], r[1], r[2]) for r in rows])
    targets = np.array([r[3] for r in rows])
    got = np.array([p for _, p in preds])
    train_mse = float(np.mean((got - targets) ** 2))
    assert train_mse < 0.5, train_mse


def test_training_artifacts_written(tmp_path):
    rows = _rows(12, lambda i, rng: 3.0)
    cfg = TrainConfig(max_epochs=3, patience=3, seed=0)
    train(None, SMALL, cfg, out_dir=tmp_path, train_rows=rows[:8], val_rows=rows[8:])
    assert (tmp_path / "model.pt").is_file()
    with open(tmp_path / "training.csv") as fh:
        lines = list(csv.reader(fh))
    assert lines[0] == ["epoch", "train_loss", "val_loss"]
    assert len(lines) == 4


def test_train_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(learning_rate=0.0)
    with pytest.raises(ValueError):
        TrainConfig(batch_size=0)


def test_write_predictions_sidecar(tmp_path):
    rows = _rows(6, lambda i, rng: 2.0)
    cfg = TrainConfig(max_epochs=2, patience=2, seed=0)
    train(None, SMALL, cfg, out_dir=tmp_path, train_rows=rows[:4], val_rows=rows[4:])
    out = tmp_path / "preds.csv"
    sidecar = write_predictions(out, tmp_path / "model.pt",
                                [(r[0], r[1], r[2]) for r in rows])
    with open(out) as fh:
        read = list(csv.DictReader(fh))
    assert [int(r["pair_id"]) for r in read] == [r[0] for r in rows]
    assert all(float(r["alpha_pred"]) > 0 for r in read)
    meta = json.loads((tmp_path / "preds.timing.json").read_text())
    assert meta["n_pairs"] == 6
    assert meta["seconds_per_pair"] > 0
    assert len(meta["model_hash"]) == 16
    assert sidecar == meta
