"""Batch inference: predictions CSV plus a JSON timing/model-hash sidecar."""

from __future__ import annotations

import csv
import hashlib
import json
import resource
import time
from pathlib import Path

import numpy as np
import torch

from .model import TwoStreamRegressor, load_model
from .records import load_manifest, read_record


def model_hash(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()[:16]


def predict_pairs(model: TwoStreamRegressor, rows, batch_size: int = 16):
    """rows: iterable of (pair_id, source, target); returns [(id, alpha_pred)]."""
    model.eval()
    out = []
    rows = list(rows)
    with torch.no_grad():
        for lo in range(0, len(rows), batch_size):
            chunk = rows[lo : lo + batch_size]
            src = torch.from_numpy(np.stack([r[1] for r in chunk])[:, None].astype(np.float32))
            tgt = torch.from_numpy(np.stack([r[2] for r in chunk])[:, None].astype(np.float32))
            pred = model(src, tgt)
            out.extend((r[0], float(p)) for r, p in zip(chunk, pred))
    return out


def corpus_rows(corpus_dir, split=None):
    """All completed pairs of a corpus, optionally restricted to one split."""
    corpus_dir = Path(corpus_dir)
    manifest = load_manifest(corpus_dir)
    ids = sorted(int(k) for k, v in manifest.get("pairs", {}).items()
                 if v.get("status") == "ok")
    if split is not None:
        keep = set(manifest["splits"][split])
        ids = [i for i in ids if i in keep]
    for pid in ids:
        arrays, _ = read_record(corpus_dir / f"pair_{pid:05d}")
        yield pid, np.asarray(arrays["source"], np.float32), np.asarray(
            arrays["target"], np.float32)


def write_predictions(out_path, model_path, rows, batch_size: int = 16) -> dict:
    """Run inference over rows and write CSV + ``<name>.timing.json`` sidecar."""
    out_path = Path(out_path)
    model = load_model(model_path)
    rows = list(rows)
    t0 = time.time()
    preds = predict_pairs(model, rows, batch_size)
    elapsed = time.time() - t0
    with open(out_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["pair_id", "alpha_pred"])
        for pid, a in preds:
            w.writerow([pid, repr(a)])
    sidecar = {
        "n_pairs": len(preds),
        "seconds_total": elapsed,
        "seconds_per_pair": elapsed / max(len(preds), 1),
        "rss_mb": resource.getrusage(resource.RUSAGE_SELF).ru_maxrss / 1024.0,
        "model_hash": model_hash(model_path),
    }
    with open(out_path.with_suffix(".timing.json"), "w") as fh:
        json.dump(sidecar, fh, indent=2)
        fh.write("\n")
    return sidecar
