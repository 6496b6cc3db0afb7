"""Standalone reader for the registration toolkit's on-disk corpus format.

Deliberately independent of the producing package: a record is a
directory with ``header.json`` plus one flat little-endian binary file
per array, and a corpus adds a ``manifest.json`` with per-pair status and
train/val/test splits.  Everything here is plain JSON plus ``np.fromfile``.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

_DTYPES = {"<f8": np.dtype("<f8"), "<c16": np.dtype("<c16"), "<i4": np.dtype("<i4")}


class CorpusError(RuntimeError):
    pass


def read_record(path):
    """Returns (arrays, meta) for one record directory."""
    path = Path(path)
    header_path = path / "header.json"
    if not header_path.is_file():
        raise CorpusError(f"missing header.json in {path}")
    with open(header_path) as fh:
        header = json.load(fh)
    arrays = {}
    for name, entry in header.get("arrays", {}).items():
        dtype = _DTYPES.get(entry["dtype"])
        if dtype is None:
            raise CorpusError(f"unknown dtype tag {entry['dtype']!r} for {name}")
        shape = tuple(entry["shape"])
        raw = np.fromfile(path / entry["file"], dtype=dtype)
        if raw.size != int(np.prod(shape)):
            raise CorpusError(f"array {name} in {path}: size mismatch")
        arrays[name] = raw.reshape(shape)
    return arrays, header.get("meta", {})


def load_manifest(corpus_dir) -> dict:
    p = Path(corpus_dir) / "manifest.json"
    if not p.is_file():
        raise CorpusError(f"no manifest.json under {corpus_dir}")
    with open(p) as fh:
        return json.load(fh)


def load_split(corpus_dir, split: str, target: str = "alpha_true"):
    """Yield (pair_id, source, target_image, alpha) for one manifest split.

    ``target`` names the manifest field used as the regression label,
    either the synthesis scale ``alpha_true`` or the registration
    estimate ``alpha_map``.  Pairs missing the requested field are
    skipped: they carry no regression target.
    """
    if target not in ("alpha_true", "alpha_map"):
        raise ValueError("target must be 'alpha_true' or 'alpha_map'")
    corpus_dir = Path(corpus_dir)
    manifest = load_manifest(corpus_dir)
    splits = manifest.get("splits")
    if not splits or split not in splits:
        raise CorpusError(f"manifest has no '{split}' split")
    pairs = manifest.get("pairs", {})
    out = []
    for pid in splits[split]:
        entry = pairs.get(str(pid), {})
        if entry.get("status") != "ok" or target not in entry:
            continue
        arrays, _ = read_record(corpus_dir / f"pair_{pid:05d}")
        out.append((int(pid), np.asarray(arrays["source"], np.float32),
                    np.asarray(arrays["target"], np.float32),
                    float(entry[target])))
    if not out:
        raise CorpusError(f"split '{split}' has no usable pairs")
    return out
