"""On-disk record format: JSON headers plus raw little-endian arrays.

A record is a directory with a ``header.json`` describing every stored
array (name, shape, dtype) and one flat binary file per array.  The
layout is deliberately language-neutral so downstream consumers can
read it with nothing but a JSON parser and a byte reader.  8- and
16-bit grayscale PGM is supported for human-made 2D test images.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .fields import BandlimitedField

HEADER_NAME = "header.json"

# dtype tags are explicit little-endian so the bytes mean the same thing
# on any writer/reader pair
_DTYPES = {"<f8": np.dtype("<f8"), "<c16": np.dtype("<c16"), "<i4": np.dtype("<i4")}


class ContainerError(RuntimeError):
    """Malformed or inconsistent on-disk record."""


def _dtype_tag(arr: np.ndarray) -> str:
    for tag, dt in _DTYPES.items():
        if arr.dtype == dt:
            return tag
    raise ContainerError(f"unsupported array dtype {arr.dtype}")


def write_record(path, arrays: dict, meta: dict = None) -> None:
    """Write arrays plus metadata as one record directory."""
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    entries = {}
    for name, arr in arrays.items():
        arr = np.ascontiguousarray(arr)
        if arr.dtype == np.float64:
            arr = arr.astype("<f8")
        elif arr.dtype == np.complex128:
            arr = arr.astype("<c16")
        elif arr.dtype in (np.int32, np.int64):
            arr = arr.astype("<i4")
        tag = _dtype_tag(arr)
        fname = f"{name}.bin"
        arr.tofile(path / fname)
        entries[name] = {"file": fname, "shape": list(arr.shape), "dtype": tag}
    header = {"arrays": entries, "meta": meta or {}}
    with open(path / HEADER_NAME, "w") as fh:
        json.dump(header, fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_record(path):
    """Read a record directory; returns (arrays, meta)."""
    path = Path(path)
    header_path = path / HEADER_NAME
    if not header_path.is_file():
        raise ContainerError(f"missing {HEADER_NAME} in {path}")
    with open(header_path) as fh:
        header = json.load(fh)
    arrays = {}
    for name, entry in header.get("arrays", {}).items():
        dtype = _DTYPES.get(entry["dtype"])
        if dtype is None:
            raise ContainerError(f"unknown dtype tag {entry['dtype']!r} for {name}")
        shape = tuple(entry["shape"])
        raw = np.fromfile(path / entry["file"], dtype=dtype)
        expect = int(np.prod(shape)) if shape else 1
        if raw.size != expect:
            raise ContainerError(f"array {name}: expected {expect} items, found {raw.size}")
        arrays[name] = raw.reshape(shape)
    return arrays, header.get("meta", {})


def write_field(path, name_prefix: str, f: BandlimitedField, arrays: dict, meta: dict) -> None:
    """Stage a bandlimited field into a record's arrays/meta dicts."""
    arrays[f"{name_prefix}_coeffs"] = f.coeffs
    meta[f"{name_prefix}_grid_dims"] = list(f.grid_dims)


def read_field(arrays: dict, meta: dict, name_prefix: str) -> BandlimitedField:
    coeffs = arrays[f"{name_prefix}_coeffs"]
    grid_dims = tuple(meta[f"{name_prefix}_grid_dims"])
    return BandlimitedField(coeffs, grid_dims)


def read_image(path) -> np.ndarray:
    """Load a 2D image: PGM (binary P5), or a flat-binary record directory
    holding a single ``image`` array."""
    path = Path(path)
    if path.is_dir():
        arrays, _ = read_record(path)
        if "image" not in arrays:
            raise ContainerError(f"record {path} has no 'image' array")
        return np.asarray(arrays["image"], dtype=np.float64)
    if path.suffix.lower() == ".pgm":
        return read_pgm(path)
    raise ContainerError(f"unrecognized image input {path}")


def write_image(path, img: np.ndarray) -> None:
    path = Path(path)
    if path.suffix.lower() == ".pgm":
        write_pgm(path, img)
    else:
        write_record(path, {"image": np.asarray(img, dtype=np.float64)})


def read_pgm(path) -> np.ndarray:
    """Binary PGM (P5), 8 or 16 bit, scaled to [0, 1]."""
    with open(path, "rb") as fh:
        data = fh.read()
    tokens = []
    i = 0
    while len(tokens) < 4:
        if i >= len(data):
            raise ContainerError(f"truncated PGM header in {path}")
        c = data[i : i + 1]
        if c == b"#":
            while i < len(data) and data[i : i + 1] != b"\n":
                i += 1
        elif c.isspace():
            i += 1
        else:
            j = i
            while j < len(data) and not data[j : j + 1].isspace():
                j += 1
            tokens.append(data[i:j])
            i = j
    if tokens[0] != b"P5":
        raise ContainerError(f"{path} is not binary PGM (P5)")
    width, height, maxval = (int(t) for t in tokens[1:4])
    if not 0 < maxval < 65536:
        raise ContainerError(f"bad PGM maxval {maxval}")
    i += 1  # single whitespace after maxval
    dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
    raw = np.frombuffer(data, dtype=dtype, count=width * height, offset=i)
    return raw.reshape(height, width).astype(np.float64) / maxval


def write_pgm(path, img: np.ndarray, maxval: int = 255) -> None:
    img = np.asarray(img, dtype=np.float64)
    if img.ndim != 2:
        raise ContainerError("PGM supports 2D images only")
    quant = np.clip(np.rint(img * maxval), 0, maxval)
    dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
    with open(path, "wb") as fh:
        fh.write(f"P5\n{img.shape[1]} {img.shape[0]}\n{maxval}\n".encode())
        fh.write(quant.astype(dtype).tobytes())


def load_manifest(corpus_dir) -> dict:
    p = Path(corpus_dir) / "manifest.json"
    if not p.is_file():
        raise ContainerError(f"no manifest.json under {corpus_dir}")
    with open(p) as fh:
        return json.load(fh)


def save_manifest(corpus_dir, manifest: dict) -> None:
    p = Path(corpus_dir) / "manifest.json"
    tmp = p.with_suffix(".json.tmp")
    with open(tmp, "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    tmp.replace(p)
