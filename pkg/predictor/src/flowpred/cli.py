"""Command-line surface: train, predict, evaluate-downstream."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import fields

from .model import NetworkSpec
from .records import CorpusError

log = logging.getLogger("flowpred")


def _spec_from_args(args) -> NetworkSpec:
    return NetworkSpec(log_target=args.log_target)


def cmd_train(args) -> int:
    from .train import TrainConfig, train

    kwargs = {}
    for f in fields(TrainConfig):
        v = getattr(args, f.name, None)
        if v is not None:
            kwargs[f.name] = v
    model, best_val = train(args.corpus, _spec_from_args(args), TrainConfig(**kwargs),
                            out_dir=args.out, target=args.target)
    print(json.dumps({"best_val_loss": best_val, "model": f"{args.out}/model.pt"}))
    return 0


def cmd_predict(args) -> int:
    from .predict import corpus_rows, write_predictions

    rows = corpus_rows(args.corpus, split=args.split)
    sidecar = write_predictions(args.out, args.model, rows, batch_size=args.batch_size)
    print(json.dumps(sidecar))
    return 0


def cmd_downstream(args) -> int:
    from .downstream import PrimaryMissingError, evaluate_downstream

    try:
        report = evaluate_downstream(args.corpus, args.predictions, args.out,
                                     registry_cmd=args.registry_cmd)
    except PrimaryMissingError as err:
        log.error("%s", err)
        return 2
    print(json.dumps({"n_pairs": report["n_pairs"],
                      "mean_image_error": report["image_mean_error"]["mean"],
                      "image_error_met": report["image_error_met"]}))
    return 0


def build_parser():
    p = argparse.ArgumentParser(prog="flowpred",
                                description="Smoothness-parameter regression from image pairs")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="fit the regressor on a corpus")
    t.add_argument("--corpus", required=True)
    t.add_argument("--out", default="model")
    t.add_argument("--log-target", action="store_true",
                   help="regress log(alpha) instead of raw alpha")
    t.add_argument("--target", choices=("alpha_true", "alpha_map"),
                   default="alpha_true",
                   help="manifest field used as the regression label")
    t.add_argument("--learning-rate", type=float, default=None)
    t.add_argument("--batch-size", type=int, default=None)
    t.add_argument("--weight-decay", type=float, default=None)
    t.add_argument("--max-epochs", type=int, default=None)
    t.add_argument("--patience", type=int, default=None)
    t.add_argument("--seed", type=int, default=None)
    t.set_defaults(fn=cmd_train)

    pr = sub.add_parser("predict", help="write a predictions CSV for a corpus")
    pr.add_argument("--corpus", required=True)
    pr.add_argument("--model", required=True)
    pr.add_argument("--out", required=True)
    pr.add_argument("--split", default=None, help="restrict to one manifest split")
    pr.add_argument("--batch-size", type=int, default=16)
    pr.set_defaults(fn=cmd_predict)

    d = sub.add_parser("evaluate-downstream",
                       help="re-register at predicted values via the registration CLI")
    d.add_argument("--corpus", required=True)
    d.add_argument("--predictions", required=True)
    d.add_argument("--out", required=True)
    d.add_argument("--registry-cmd", default="flowreg")
    d.set_defaults(fn=cmd_downstream)
    return p


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as err:
        return 0 if err.code == 0 else 1
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.fn(args)
    except CorpusError as err:
        log.error("%s", err)
        return 2
    except (OSError, ValueError) as err:
        log.error("%s", err)
        return 1


if __name__ == "__main__":
    sys.exit(main())
