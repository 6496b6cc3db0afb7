"""Training loop: squared-error regression with best-validation checkpointing."""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch

from .model import NetworkSpec, TwoStreamRegressor, save_model
from .records import load_split

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 5e-4
    batch_size: int = 16
    weight_decay: float = 1e-4
    max_epochs: int = 1000
    patience: int = 40  # epochs without validation improvement before stopping
    seed: int = 0

    def __post_init__(self):
        if min(self.learning_rate, self.weight_decay) <= 0 or self.batch_size < 1:
            raise ValueError("hyperparameters must be positive")
        if self.max_epochs < 1 or self.patience < 1:
            raise ValueError("max_epochs and patience must be >= 1")


def _to_tensors(rows):
    src = torch.from_numpy(np.stack([r[1] for r in rows])[:, None])
    tgt = torch.from_numpy(np.stack([r[2] for r in rows])[:, None])
    alpha = torch.tensor([r[3] for r in rows], dtype=torch.float32)
    return src, tgt, alpha


def _loss(pred, alpha, log_target):
    if log_target:
        return torch.mean((torch.log(pred) - torch.log(alpha)) ** 2)
    return torch.mean((pred - alpha) ** 2)


def train(corpus_dir, spec: NetworkSpec = NetworkSpec(), cfg: TrainConfig = TrainConfig(),
          out_dir="model", train_rows=None, val_rows=None, target="alpha_true"):
    """Fit the regressor on a corpus; returns (model, best validation loss).

    Writes ``model.pt`` (weights + architecture JSON) and ``training.csv``
    (per-epoch train/validation loss) under ``out_dir``.  ``train_rows`` /
    ``val_rows`` override the manifest splits (used by tests); ``target``
    picks the manifest regression label (synthesis scale or MAP estimate).
    """
    torch.manual_seed(cfg.seed)
    torch.use_deterministic_algorithms(True, warn_only=True)
    if train_rows is None:
        train_rows = load_split(corpus_dir, "train", target)
    if val_rows is None:
        val_rows = load_split(corpus_dir, "val", target)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    src, tgt, alpha = _to_tensors(train_rows)
    vsrc, vtgt, valpha = _to_tensors(val_rows)
    model = TwoStreamRegressor(spec)
    # weight decay is the squared-norm regularizer of the objective
    opt = torch.optim.Adam(model.parameters(), lr=cfg.learning_rate,
                           weight_decay=cfg.weight_decay)
    gen = torch.Generator().manual_seed(cfg.seed)

    best_val = float("inf")
    best_state = None
    stale = 0
    history = []
    n = src.shape[0]
    for epoch in range(cfg.max_epochs):
        model.train()
        perm = torch.randperm(n, generator=gen)
        tot = 0.0
        for lo in range(0, n, cfg.batch_size):
            idx = perm[lo : lo + cfg.batch_size]
            opt.zero_grad()
            pred = model(src[idx], tgt[idx])
            loss = _loss(pred, alpha[idx], spec.log_target)
            loss.backward()
            opt.step()
            tot += float(loss.detach()) * len(idx)
        train_loss = tot / n

        model.eval()
        with torch.no_grad():
            val_loss = float(_loss(model(vsrc, vtgt), valpha, spec.log_target))
        history.append((epoch, train_loss, val_loss))
        if val_loss < best_val:
            best_val = val_loss
            best_state = {k: v.detach().clone() for k, v in model.state_dict().items()}
            stale = 0
        else:
            stale += 1
        if epoch % 10 == 0 or stale == 0:
            log.info("epoch %d: train %.5f val %.5f (best %.5f)", epoch, train_loss,
                     val_loss, best_val)
        if stale >= cfg.patience:
            log.info("validation stalled for %d epochs; stopping at %d", cfg.patience, epoch)
            break

    if best_state is not None:
        model.load_state_dict(best_state)
    model.eval()
    save_model(out_dir / "model.pt", model)
    with open(out_dir / "training.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["epoch", "train_loss", "val_loss"])
        w.writerows(history)
    return model, best_val
