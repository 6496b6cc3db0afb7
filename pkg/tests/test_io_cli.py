import json
import os

import numpy as np
import pytest

from flowreg.cli import main
from flowreg.io import (
    ContainerError,
    load_manifest,
    read_field,
    read_pgm,
    read_record,
    save_manifest,
    write_field,
    write_pgm,
    write_record,
)
from flowreg.posterior import PosteriorConfig
from flowreg.synth import BullEyeSpec, bulleye, synthesize_pair

FAST_CFG = {"trunc_dim": 8, "max_iters": 4, "polish": False}


@pytest.fixture
def fast_config(tmp_path):
    p = tmp_path / "config.json"
    p.write_text(json.dumps(FAST_CFG))
    return str(p)


def test_record_round_trip_bit_exact(tmp_path, rng):
    arrays = {
        "floats": rng.standard_normal((7, 5)),
        "complexes": rng.standard_normal((3, 4)) + 1j * rng.standard_normal((3, 4)),
        "ints": rng.integers(-100, 100, (6,)).astype(np.int32),
    }
    meta = {"answer": 42, "nested": {"x": [1, 2, 3]}}
    write_record(tmp_path / "rec", arrays, meta)
    back, meta_back = read_record(tmp_path / "rec")
    for name, arr in arrays.items():
        assert back[name].tobytes() == np.ascontiguousarray(arr).tobytes(), name
    assert meta_back == meta


def test_record_detects_truncation(tmp_path, rng):
    write_record(tmp_path / "rec", {"a": rng.standard_normal(10)})
    binfile = tmp_path / "rec" / "a.bin"
    binfile.write_bytes(binfile.read_bytes()[:-8])
    with pytest.raises(ContainerError):
        read_record(tmp_path / "rec")


def test_missing_record_raises(tmp_path):
    with pytest.raises(ContainerError):
        read_record(tmp_path / "nothing")


def test_field_round_trip(tmp_path):
    cfg = PosteriorConfig(trunc_dim=8)
    pair = synthesize_pair(BullEyeSpec(), 6.0, 2, cfg)
    arrays, meta = {}, {}
    write_field(tmp_path, "v0", pair.v0_true, arrays, meta)
    write_record(tmp_path / "rec", arrays, meta)
    back_arrays, back_meta = read_record(tmp_path / "rec")
    f = read_field(back_arrays, back_meta, "v0")
    assert np.array_equal(f.coeffs, pair.v0_true.coeffs)
    assert f.grid_dims == pair.v0_true.grid_dims


def test_pgm_round_trip(tmp_path, rng):
    img = rng.random((9, 13))
    p = tmp_path / "img.pgm"
    write_pgm(p, img, maxval=65535)
    back = read_pgm(p)
    assert back.shape == img.shape
    assert np.max(np.abs(back - img)) <= 0.5 / 65535 + 1e-12


def test_pgm_8bit_and_comments(tmp_path):
    p = tmp_path / "img.pgm"
    payload = bytes(range(6))
    p.write_bytes(b"P5\n# a comment\n3 2\n255\n" + payload)
    img = read_pgm(p)
    assert img.shape == (2, 3)
    assert np.allclose(img * 255, np.arange(6).reshape(2, 3))


def test_manifest_round_trip(tmp_path):
    m = {"pairs": {"0": {"status": "ok"}}, "seed": 3}
    save_manifest(tmp_path, m)
    assert load_manifest(tmp_path) == m


def test_cli_usage_errors(tmp_path):
    assert main([]) == 1  # no subcommand
    assert main(["register", "a.pgm", "b.pgm", "--out", str(tmp_path)]) == 1  # no alpha mode
    assert main(["register", "a.pgm", "b.pgm", "--out", str(tmp_path),
                 "--alpha", "2", "--estimate"]) == 1


def test_cli_io_error(tmp_path):
    assert main(["register", str(tmp_path / "no.pgm"), str(tmp_path / "no2.pgm"),
                 "--out", str(tmp_path / "out"), "--alpha", "2.0"]) == 2
    assert main(["inspect", str(tmp_path / "missing")]) == 2


def test_cli_rejects_unknown_config_field(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text(json.dumps({"not_a_field": 1}))
    assert main(["bench", "--out", str(tmp_path / "b"), "--config", str(p)]) == 1


def test_cli_register_fixed_alpha(tmp_path, fast_config, capsys):
    cfg = PosteriorConfig(**FAST_CFG)
    pair = synthesize_pair(BullEyeSpec(), 6.0, 4, cfg, min_det=0.1, max_attempts=32)
    src, tgt = tmp_path / "s.pgm", tmp_path / "t.pgm"
    write_pgm(src, pair.source, maxval=65535)
    write_pgm(tgt, pair.target, maxval=65535)
    out = tmp_path / "reg"
    code = main(["register", str(src), str(tgt), "--out", str(out),
                 "--alpha", "6.0", "--config", fast_config])
    assert code == 0
    summary = json.loads(capsys.readouterr().out.strip().splitlines()[-1])
    assert summary["alpha"] == 6.0
    arrays, meta = read_record(out)
    assert "deformed" in arrays and "jacobian_det" in arrays
    assert (out / "energy_trace.csv").is_file()
    energies = np.loadtxt(out / "energy_trace.csv", delimiter=",", skiprows=1, usecols=1, ndmin=1)
    assert np.all(np.diff(energies) <= 0)


def test_cli_generate_resume_and_inspect(tmp_path, fast_config, capsys):
    out = tmp_path / "corpus"
    args = ["generate", "--out", str(out), "--n-pairs", "2", "--alphas", "6.0",
            "--seed", "9", "--config", fast_config, "--no-register"]
    assert main(args) == 0
    manifest = load_manifest(out)
    assert len(manifest["pairs"]) == 2
    assert all(v["status"] == "ok" for v in manifest["pairs"].values())
    splits = manifest["splits"]
    assert sorted(splits["train"] + splits["val"] + splits["test"]) == [0, 1]
    # resume: nothing left to do, manifest unchanged
    assert main(args) == 0
    assert load_manifest(out) == manifest
    assert main(["inspect", str(out)]) == 0
    info = json.loads(capsys.readouterr().out)
    assert info["kind"] == "corpus" and info["pairs_ok"] == 2
    assert main(["inspect", str(out / "pair_00000")]) == 0
    info = json.loads(capsys.readouterr().out)
    assert info["kind"] == "record" and "source" in info["arrays"]


def test_cli_seed_env(tmp_path, fast_config, monkeypatch):
    out1, out2 = tmp_path / "c1", tmp_path / "c2"
    monkeypatch.setenv("FLOWREG_SEED", "77")
    base = ["generate", "--n-pairs", "1", "--alphas", "6.0",
            "--config", fast_config, "--no-register"]
    assert main(base + ["--out", str(out1)]) == 0
    monkeypatch.delenv("FLOWREG_SEED")
    assert main(base + ["--out", str(out2), "--seed", "77"]) == 0
    a, _ = read_record(out1 / "pair_00000")
    b, _ = read_record(out2 / "pair_00000")
    assert np.array_equal(a["target"], b["target"])


def test_cli_evaluate(tmp_path, fast_config, capsys):
    out = tmp_path / "corpus"
    assert main(["generate", "--out", str(out), "--n-pairs", "1", "--alphas", "6.0",
                 "--seed", "5", "--config", fast_config, "--min-det", "0.1",
                 "--max-attempts", "32"]) == 0
    manifest = load_manifest(out)
    alpha_map = manifest["pairs"]["0"]["alpha_map"]
    preds = tmp_path / "preds.csv"
    preds.write_text(f"pair_id,alpha_pred\n0,{alpha_map}\n")
    ev = tmp_path / "eval"
    assert main(["evaluate", "--corpus", str(out), "--predictions", str(preds),
                 "--out", str(ev), "--config", fast_config]) == 0
    report = json.loads((ev / "report.json").read_text())
    assert report["n_pairs"] == 1
    # predicted alpha equals the reference alpha; the re-registration takes
    # its own optimizer path, so require agreement only at coarse level
    assert 0.0 <= report["image_mean_error"]["mean"] < 0.2
    assert report["alpha_abs_diff"]["max"] == 0.0
    assert (ev / "per_pair.csv").is_file()
    assert (ev / "errmap_00000" / "header.json").is_file()


def test_cli_bench(tmp_path, fast_config, capsys):
    out = tmp_path / "bench"
    assert main(["bench", "--out", str(out), "--config", fast_config, "--seed", "3",
                 "--repeats", "1", "--iters", "2", "--truncs", "8"]) == 0
    assert (out / "bench.md").is_file()
    assert (out / "bench.csv").is_file()
    table = capsys.readouterr().out
    assert "trunc=8" in table
