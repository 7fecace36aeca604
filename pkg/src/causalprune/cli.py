"""Command-line entry point: synth, prune, train, finetune, eval, report."""

from __future__ import annotations

import argparse
import json
import sys

from .pipeline import (PipelineConfig, run_eval, run_finetune, run_prune,
                       run_report, run_synth, run_train)
from .presets import PRESETS


def _load_config(args) -> PipelineConfig:
    if args.config:
        cfg = PipelineConfig.from_file(args.config)
    else:
        cfg = PipelineConfig()
    for key in ("seed", "out", "data", "test_data", "arm"):
        val = getattr(args, key, None)
        if val is not None:
            if key == "out":
                cfg.out_dir = val
            elif key == "data":
                cfg.train_data = val
            else:
                setattr(cfg, key, val)
    return cfg


def _add_common(p):
    p.add_argument("--config", help="pipeline config JSON")
    p.add_argument("--seed", type=int, help="root seed override")
    p.add_argument("--out", help="output directory override")


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="causalprune",
        description="Two-stage causal/probabilistic window pruning and "
                    "desk-scale transformer RUL prediction")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic dataset")
    p.add_argument("--spec", help="DegradationSpec JSON file")
    p.add_argument("--preset", choices=sorted(PRESETS),
                   help="built-in benchmark spec")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int)

    p = sub.add_parser("prune", help="run the two-stage pruning pipeline")
    _add_common(p)
    p.add_argument("--data", help="training data CSV override")
    p.add_argument("--arm", choices=("cg", "pc", "full", "sub"))

    p = sub.add_parser("train", help="pretrain the predictor from scratch")
    _add_common(p)
    p.add_argument("--data", help="source data CSV override")

    p = sub.add_parser("finetune", help="fine-tune a checkpoint")
    _add_common(p)
    p.add_argument("--data", help="target training data CSV override")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--index", help="prune index restricting the windows")

    p = sub.add_parser("eval", help="evaluate a checkpoint on test data")
    _add_common(p)
    p.add_argument("--test-data", dest="test_data")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--normalizer", required=True)
    p.add_argument("--index", help="prune index for the retention fraction")

    p = sub.add_parser("report", help="summarize pruning artifacts")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)

    args = parser.parse_args(argv)

    if args.command == "synth":
        if bool(args.spec) == bool(args.preset):
            parser.error("synth needs exactly one of --spec / --preset")
        if args.preset:
            spec = dict(PRESETS[args.preset]["spec"])
        else:
            with open(args.spec) as fh:
                spec = json.load(fh)
        if args.seed is not None:
            spec["seed"] = args.seed
        run_synth(spec, args.out)
        return 0

    if args.command == "report":
        run_report(args.out, seed=args.seed)
        return 0

    cfg = _load_config(args)
    if args.command == "prune":
        summary = run_prune(cfg)
        return 2 if summary.get("empty") else 0
    if args.command == "train":
        run_train(cfg)
        return 0
    if args.command == "finetune":
        run_finetune(cfg, args.checkpoint, args.index)
        return 0
    if args.command == "eval":
        run_eval(cfg, args.checkpoint, args.normalizer, args.index)
        return 0
    return 1


if __name__ == "__main__":
    sys.exit(main())
