"""Command-line entry point: gen-data | train | detect | eval."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .config import load_config
from .pipeline import generate_dataset, run_detect, run_eval, run_train


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML file with per-section overrides")
    common.add_argument(
        "--set", dest="overrides", action="append", default=[], metavar="SECTION.KEY=VALUE",
        help="override one config value; may be repeated",
    )
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="slidetad", description="Sliding-window temporal action detection.")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-data", parents=[common], help="write a synthetic dataset")
    g.add_argument("--out", required=True, help="output directory")

    t = sub.add_parser("train", parents=[common], help="train a checkpoint")
    t.add_argument("--manifest", required=True)
    t.add_argument("--checkpoint", required=True, help="output checkpoint path")
    t.add_argument("--log", help="JSON-lines loss log (default: <checkpoint>.log.jsonl)")

    d = sub.add_parser("detect", parents=[common], help="write per-task detection files")
    d.add_argument("--checkpoint", required=True)
    d.add_argument("--manifest", required=True)
    d.add_argument("--out", required=True, help="output directory")

    e = sub.add_parser("eval", parents=[common], help="score detections against annotations")
    e.add_argument("detections", nargs="+", help="detection files")
    e.add_argument("--annotations", required=True)
    e.add_argument("--num-verbs", type=int, help="default: synth.num_verbs")
    e.add_argument("--num-nouns", type=int, help="default: synth.num_nouns")
    e.add_argument("--out", help="write the report as JSON here")
    return p


def _run(args) -> None:
    cfg = load_config(args.config, args.overrides)
    if args.command == "gen-data":
        for split, path in generate_dataset(cfg, args.out).items():
            print(f"{split}: {path}")
    elif args.command == "train":
        log_path = args.log or str(args.checkpoint) + ".log.jsonl"
        res = run_train(cfg, args.manifest, args.checkpoint, log_path)
        print(f"trained {len(res.epoch_losses)} epochs, final mean loss {res.epoch_losses[-1]:.6f}")
        print(f"checkpoint: {args.checkpoint}")
    elif args.command == "detect":
        for task, path in run_detect(cfg, args.checkpoint, args.manifest, args.out).items():
            print(f"{task}: {path}")
    elif args.command == "eval":
        nv = args.num_verbs if args.num_verbs is not None else cfg.synth.num_verbs
        nn = args.num_nouns if args.num_nouns is not None else cfg.synth.num_nouns
        report = run_eval(cfg, args.detections, args.annotations, nv, nn, args.out)
        print(report.format_table())


def main(argv: list[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        _run(args)
    except (OSError, ValueError, FloatingPointError) as exc:
        msg = " ".join(str(exc).split())
        print(f"slidetad {args.command}: error: {msg}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
