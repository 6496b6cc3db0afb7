"""Command-line surface: corpus generation, registration, evaluation,
benchmarking, and record inspection.

Exit codes: 0 = ran to completion (convergence is a flag inside the
output, not an exit code), 1 = usage error, 2 = I/O error, 3 = numerical
failure after retries.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import resource
import sys
import time
import tracemalloc
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, fields, replace
from pathlib import Path

import numpy as np

from .fields import BandlimitedField
from .io import ContainerError, load_manifest, read_field, read_image, read_record, save_manifest, write_field, write_image, write_record
from .posterior import PosteriorConfig, map_estimate
from .shooting import BlowUpError
from .synth import FoldedDrawError, random_bulleye_spec, synthesize_pair
from .warping import dice_scores, jacobian_determinant_map, warp_labels

log = logging.getLogger("flowreg")

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_IO = 2
EXIT_NUMERICAL = 3


class UsageError(RuntimeError):
    pass


def load_config(path) -> PosteriorConfig:
    """Posterior/integrator settings from a JSON file of field names."""
    if path is None:
        return PosteriorConfig()
    try:
        with open(path) as fh:
            data = json.load(fh)
    except OSError as err:
        raise ContainerError(f"cannot read config {path}: {err}") from err
    except json.JSONDecodeError as err:
        raise UsageError(f"config {path} is not valid JSON: {err}") from err
    known = {f.name for f in fields(PosteriorConfig)}
    unknown = set(data) - known
    if unknown:
        raise UsageError(f"unknown config fields: {sorted(unknown)}")
    try:
        return PosteriorConfig(**data)
    except (TypeError, ValueError) as err:
        raise UsageError(f"bad config values: {err}") from err


def default_seed(args_seed) -> int:
    if args_seed is not None:
        return int(args_seed)
    env = os.environ.get("FLOWREG_SEED")
    return int(env) if env else 0


def _split_assignment(ids, seed):
    """70/15/15 split, deterministic in the corpus seed."""
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0xA11]))
    order = list(ids)
    rng.shuffle(order)
    n = len(order)
    n_train = int(round(0.70 * n))
    n_val = int(round(0.15 * n))
    return {
        "train": sorted(order[:n_train]),
        "val": sorted(order[n_train : n_train + n_val]),
        "test": sorted(order[n_train + n_val :]),
    }


def _generate_one(task):
    """Worker: synthesize one pair, optionally register it, write the record."""
    (pair_id, alpha, seed, out_dir, cfg_dict, min_det, max_attempts,
     peak_speed, do_register) = task
    cfg = PosteriorConfig(**cfg_dict)
    t0 = time.time()
    try:
        spec = random_bulleye_spec(np.random.default_rng(np.random.SeedSequence([seed, pair_id])))
        pair = synthesize_pair(spec, alpha, seed * 1_000_003 + pair_id, cfg,
                               min_det=min_det, max_attempts=max_attempts,
                               peak_speed=peak_speed)
        arrays = {
            "source": pair.source,
            "target": pair.target,
            "labels": pair.labels,
        }
        meta = {
            "pair_id": pair_id,
            "alpha_true": float(alpha),
            "seed": pair.seed,
            "spec": {"outer": list(spec.outer), "inner": list(spec.inner)},
            "peak_speed": peak_speed,
            "config": asdict(cfg),
        }
        write_field(out_dir, "v0_true", pair.v0_true, arrays, meta)
        write_field(out_dir, "displacement_true", pair.displacement, arrays, meta)
        if do_register:
            res = map_estimate(pair.source, pair.target, cfg)
            arrays["deformed_map"] = res.deformed
            arrays["energy_trace"] = np.asarray(res.energy_trace)
            write_field(out_dir, "v0_map", res.v0, arrays, meta)
            write_field(out_dir, "displacement_map", res.displacement, arrays, meta)
            meta["alpha_map"] = float(res.alpha_opt)
            meta["converged"] = bool(res.converged)
            meta["iterations"] = int(res.iterations_run)
            meta["min_det_map"] = float(jacobian_determinant_map(res.displacement).min())
        write_record(Path(out_dir) / f"pair_{pair_id:05d}", arrays, meta)
        entry = {"status": "ok", "alpha_true": float(alpha), "seconds": round(time.time() - t0, 2)}
        if do_register:
            entry["alpha_map"] = meta["alpha_map"]
            entry["converged"] = meta["converged"]
        return pair_id, entry
    except (BlowUpError, FoldedDrawError, FloatingPointError) as err:
        return pair_id, {"status": "failed", "error": str(err), "alpha_true": float(alpha)}
    except Exception as err:  # per-pair failures must not abort the batch
        return pair_id, {"status": "failed", "error": f"{type(err).__name__}: {err}",
                         "alpha_true": float(alpha)}


def cmd_generate(args) -> int:
    cfg = load_config(args.config)
    seed = default_seed(args.seed)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    alphas = [float(a) for a in args.alphas.split(",")]
    if not alphas or any(a <= 0 for a in alphas):
        raise UsageError("--alphas must be positive floats")
    n = args.n_pairs
    per = [n // len(alphas)] * len(alphas)
    for i in range(n - sum(per)):
        per[i] += 1

    try:
        manifest = load_manifest(out_dir)
    except ContainerError:
        manifest = {"seed": seed, "alphas": alphas, "pairs": {}, "config": asdict(cfg)}
    pairs = manifest.setdefault("pairs", {})

    tasks = []
    pair_id = 0
    for alpha, count in zip(alphas, per):
        for _ in range(count):
            key = str(pair_id)
            done = pairs.get(key, {}).get("status") == "ok" and (
                out_dir / f"pair_{pair_id:05d}" / "header.json"
            ).is_file()
            if not done:
                tasks.append((pair_id, alpha, seed, str(out_dir), asdict(cfg),
                              args.min_det, args.max_attempts, args.peak_speed,
                              not args.no_register))
            pair_id += 1

    log.info("generating %d of %d pairs (%d already complete)", len(tasks), n, n - len(tasks))
    if args.jobs > 1 and tasks:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            for pid, entry in pool.map(_generate_one, tasks):
                pairs[str(pid)] = entry
                save_manifest(out_dir, manifest)
    else:
        for task in tasks:
            pid, entry = _generate_one(task)
            pairs[str(pid)] = entry
            save_manifest(out_dir, manifest)

    if "splits" not in manifest:
        ok_ids = [int(k) for k, v in pairs.items() if v.get("status") == "ok"]
        manifest["splits"] = _split_assignment(ok_ids, seed)
    save_manifest(out_dir, manifest)
    n_fail = sum(1 for v in pairs.values() if v.get("status") != "ok")
    log.info("corpus complete: %d ok, %d failed", len(pairs) - n_fail, n_fail)
    return EXIT_OK


def cmd_register(args) -> int:
    cfg = load_config(args.config)
    if (args.alpha is None) == (not args.estimate):
        raise UsageError("exactly one of --alpha or --estimate is required")
    S = read_image(args.source)
    T = read_image(args.target)
    if S.shape != T.shape:
        raise UsageError(f"source {S.shape} and target {T.shape} dims differ")
    res = map_estimate(S, T, cfg, fixed_alpha=args.alpha)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)

    det = jacobian_determinant_map(res.displacement)
    arrays = {"deformed": res.deformed, "jacobian_det": det, "source": S, "target": T}
    meta = {
        "alpha": float(res.alpha_opt),
        "estimated": bool(args.estimate),
        "converged": bool(res.converged),
        "iterations": int(res.iterations_run),
        "min_det": float(det.min()),
        "final_energy": float(res.energy_trace[-1]),
        "config": asdict(cfg),
    }
    write_field(out_dir, "v0", res.v0, arrays, meta)
    write_field(out_dir, "displacement", res.displacement, arrays, meta)
    write_record(out_dir, arrays, meta)
    with open(out_dir / "energy_trace.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["step", "energy"])
        for i, e in enumerate(res.energy_trace):
            w.writerow([i, repr(float(e))])
    with open(out_dir / "alpha_trace.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["round", "alpha"])
        for i, a in enumerate(res.alpha_trace):
            w.writerow([i, repr(float(a))])
    print(json.dumps({"alpha": meta["alpha"], "converged": meta["converged"],
                      "final_energy": meta["final_energy"], "min_det": meta["min_det"]}))
    return EXIT_OK


def _read_predictions(path) -> dict:
    preds = {}
    try:
        with open(path, newline="") as fh:
            for row in csv.DictReader(fh):
                preds[int(row["pair_id"])] = float(row["alpha_pred"])
    except OSError as err:
        raise ContainerError(f"cannot read predictions {path}: {err}") from err
    except (KeyError, ValueError) as err:
        raise UsageError(f"predictions file needs pair_id,alpha_pred columns: {err}") from err
    return preds


def cmd_evaluate(args) -> int:
    cfg = load_config(args.config)
    corpus = Path(args.corpus)
    manifest = load_manifest(corpus)
    preds = _read_predictions(args.predictions)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)

    rows = []
    missing = []
    for key, entry in sorted(manifest.get("pairs", {}).items(), key=lambda kv: int(kv[0])):
        pid = int(key)
        if entry.get("status") != "ok" or "alpha_map" not in entry:
            continue
        if pid not in preds:
            missing.append(pid)
            continue
        arrays, meta = read_record(corpus / f"pair_{pid:05d}")
        S, T = arrays["source"], arrays["target"]
        labels = arrays["labels"].astype(np.int32)
        alpha_map = float(meta["alpha_map"])
        alpha_pred = preds[pid]
        t0 = time.time()
        res = map_estimate(S, T, cfg, fixed_alpha=alpha_pred)
        wall = time.time() - t0
        deformed_map = arrays["deformed_map"]
        err_map = np.abs(res.deformed - deformed_map)
        write_record(out_dir / f"errmap_{pid:05d}", {"error_map": err_map},
                     {"pair_id": pid, "alpha_pred": alpha_pred, "alpha_map": alpha_map})
        u_map = read_field(arrays, meta, "displacement_map")
        dice_map = dice_scores(warp_labels(labels, u_map), labels)
        dice_pred = dice_scores(warp_labels(labels, res.displacement), labels)
        rows.append({
            "pair_id": pid,
            "alpha_map": alpha_map,
            "alpha_pred": alpha_pred,
            "alpha_abs_diff": abs(alpha_pred - alpha_map),
            "image_mean_error": float(err_map.mean()),
            "dice_delta_ring": dice_pred[1] - dice_map[1],
            "dice_delta_disk": dice_pred[2] - dice_map[2],
            "seconds": round(wall, 3),
        })

    if not rows:
        raise UsageError("no evaluable pairs (need registered corpus + matching predictions)")
    errs = np.array([r["image_mean_error"] for r in rows])
    adiff = np.array([r["alpha_abs_diff"] for r in rows])
    report = {
        "n_pairs": len(rows),
        "missing_predictions": missing,
        "alpha_abs_diff": _summary(adiff),
        "image_mean_error": _summary(errs),
        "dice_delta_ring": _summary(np.array([r["dice_delta_ring"] for r in rows])),
        "dice_delta_disk": _summary(np.array([r["dice_delta_disk"] for r in rows])),
    }
    with open(out_dir / "report.json", "w") as fh:
        json.dump(report, fh, indent=2)
        fh.write("\n")
    with open(out_dir / "per_pair.csv", "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]))
        w.writeheader()
        w.writerows(rows)
    print(json.dumps({"n_pairs": len(rows),
                      "mean_image_error": float(errs.mean()),
                      "mean_alpha_diff": float(adiff.mean())}))
    return EXIT_OK


def _summary(x: np.ndarray) -> dict:
    q25, q50, q75 = np.percentile(x, [25, 50, 75])
    return {"mean": float(x.mean()), "std": float(x.std()), "min": float(x.min()),
            "q25": float(q25), "median": float(q50), "q75": float(q75), "max": float(x.max())}


def _bench_stage(fn, repeats):
    """Median wall time plus allocation peak and process high-water RSS."""
    times = []
    peak = 0
    for _ in range(repeats):
        tracemalloc.start()
        t0 = time.time()
        fn()
        times.append(time.time() - t0)
        _, p = tracemalloc.get_traced_memory()
        tracemalloc.stop()
        peak = max(peak, p)
    rss_kb = resource.getrusage(resource.RUSAGE_SELF).ru_maxrss
    return float(np.median(times)), peak / 1e6, rss_kb / 1024.0


def cmd_bench(args) -> int:
    cfg = load_config(args.config)
    seed = default_seed(args.seed)
    spec = random_bulleye_spec(np.random.default_rng(seed))
    pair = synthesize_pair(spec, 6.0, seed + 1, cfg, min_det=0.1, max_attempts=64)

    # identical optimizer work across rows: fixed alpha, capped iterations,
    # no polish (the dense dof algebra has no full-grid counterpart)
    bench_iters = args.iters
    rows = []
    for trunc in args.truncs:
        c = replace(cfg, trunc_dim=trunc, max_iters=bench_iters, polish=False)
        t, alloc_mb, rss_mb = _bench_stage(
            lambda c=c: map_estimate(pair.source, pair.target, c, fixed_alpha=6.0), args.repeats
        )
        rows.append({"stage": f"registration trunc={trunc}", "seconds": t,
                     "alloc_peak_mb": alloc_mb, "rss_high_water_mb": rss_mb})
    if args.full_grid:
        n_full = pair.source.shape[0]
        c = replace(cfg, trunc_dim=n_full, max_iters=bench_iters, polish=False)
        t, alloc_mb, rss_mb = _bench_stage(
            lambda c=c: map_estimate(pair.source, pair.target, c, fixed_alpha=6.0), 1
        )
        rows.append({"stage": f"registration trunc={n_full} (full grid)", "seconds": t,
                     "alloc_peak_mb": alloc_mb, "rss_high_water_mb": rss_mb})
    if args.predictions:
        # inference timing comes from the predictions sidecar, not re-measured here
        sidecar = Path(args.predictions).with_suffix(".timing.json")
        if sidecar.is_file():
            with open(sidecar) as fh:
                timing = json.load(fh)
            rows.append({"stage": "predictor inference (per pair)",
                         "seconds": float(timing.get("seconds_per_pair", float("nan"))),
                         "alloc_peak_mb": float("nan"),
                         "rss_high_water_mb": float(timing.get("rss_mb", float("nan")))})
        else:
            log.warning("no timing sidecar next to %s", args.predictions)

    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / "bench.csv", "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]))
        w.writeheader()
        w.writerows(rows)
    lines = ["| Stage | Wall time (s) | Allocation peak (MB) | RSS high water (MB) |",
             "|---|---|---|---|"]
    for r in rows:
        lines.append(f"| {r['stage']} | {r['seconds']:.2f} | {r['alloc_peak_mb']:.1f} "
                     f"| {r['rss_high_water_mb']:.1f} |")
    table = "\n".join(lines) + "\n"
    (out_dir / "bench.md").write_text(table)
    print(table)
    return EXIT_OK


def cmd_inspect(args) -> int:
    path = Path(args.path)
    if (path / "manifest.json").is_file():
        manifest = load_manifest(path)
        pairs = manifest.get("pairs", {})
        ok = [k for k, v in pairs.items() if v.get("status") == "ok"]
        print(json.dumps({
            "kind": "corpus",
            "pairs_ok": len(ok),
            "pairs_failed": len(pairs) - len(ok),
            "alphas": manifest.get("alphas"),
            "splits": {k: len(v) for k, v in manifest.get("splits", {}).items()},
            "seed": manifest.get("seed"),
        }, indent=2))
        return EXIT_OK
    arrays, meta = read_record(path)
    print(json.dumps({
        "kind": "record",
        "arrays": {k: {"shape": list(v.shape), "dtype": str(v.dtype)} for k, v in arrays.items()},
        "meta": meta,
    }, indent=2, default=str))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="flowreg",
                                description="Bandlimited diffeomorphic registration toolkit")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="synthesize a registration corpus")
    g.add_argument("--out", required=True)
    g.add_argument("--n-pairs", type=int, required=True)
    g.add_argument("--alphas", default="0.1,1.0,10.0",
                   help="comma-separated ground-truth smoothness values")
    g.add_argument("--seed", type=int, default=None)
    g.add_argument("--config", default=None)
    g.add_argument("--jobs", type=int, default=1)
    g.add_argument("--min-det", type=float, default=None,
                   help="resample draws whose deformation folds below this floor")
    g.add_argument("--max-attempts", type=int, default=5)
    g.add_argument("--peak-speed", type=float, default=None,
                   help="rescale each velocity draw to this maximum pointwise speed")
    g.add_argument("--no-register", action="store_true",
                   help="skip attaching the estimated smoothness per pair")
    g.set_defaults(fn=cmd_generate)

    r = sub.add_parser("register", help="register one image pair")
    r.add_argument("source")
    r.add_argument("target")
    r.add_argument("--out", required=True)
    r.add_argument("--alpha", type=float, default=None)
    r.add_argument("--estimate", action="store_true")
    r.add_argument("--config", default=None)
    r.set_defaults(fn=cmd_register)

    e = sub.add_parser("evaluate", help="compare predictions against corpus registrations")
    e.add_argument("--corpus", required=True)
    e.add_argument("--predictions", required=True)
    e.add_argument("--out", required=True)
    e.add_argument("--config", default=None)
    e.set_defaults(fn=cmd_evaluate)

    b = sub.add_parser("bench", help="runtime and memory table")
    b.add_argument("--out", required=True)
    b.add_argument("--config", default=None)
    b.add_argument("--seed", type=int, default=None)
    b.add_argument("--repeats", type=int, default=3)
    b.add_argument("--iters", type=int, default=20)
    b.add_argument("--truncs", type=int, nargs="+", default=[16, 32])
    b.add_argument("--full-grid", action="store_true")
    b.add_argument("--predictions", default=None)
    b.set_defaults(fn=cmd_bench)

    i = sub.add_parser("inspect", help="describe a record or corpus")
    i.add_argument("path")
    i.set_defaults(fn=cmd_inspect)
    return p


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as err:
        # argparse exits with 2 on bad usage; map onto our code space
        return EXIT_OK if err.code == 0 else EXIT_USAGE
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.fn(args)
    except UsageError as err:
        log.error("%s", err)
        return EXIT_USAGE
    except (ContainerError, OSError) as err:
        log.error("%s", err)
        return EXIT_IO
    except (BlowUpError, FoldedDrawError, FloatingPointError) as err:
        log.error("numerical failure: %s", err)
        return EXIT_NUMERICAL
    except ValueError as err:
        log.error("%s", err)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
