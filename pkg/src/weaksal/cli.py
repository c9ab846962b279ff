"""Command-line surface: dataset synthesis, the two training stages,
pseudo-label generation, evaluation, and inference.

Every training-related subcommand accepts `--config FILE` (key = value lines,
# comments) plus repeated `--set key=value` overrides; see configs/ for the
documented files.
"""

from __future__ import annotations

import argparse
import logging
import sys

from . import data
from . import train


def _split_set(entry: str) -> tuple:
    key, eq, raw = entry.partition("=")
    if not eq or not key.strip():
        raise SystemExit(f"--set expects key=value, got {entry!r}")
    return key.strip(), train.parse_config_value(raw.strip())


def _gather_overrides(args) -> dict:
    values = {}
    if args.config:
        values.update(train.read_config_file(args.config))
    for entry in args.set:
        key, value = _split_set(entry)
        values[key] = value
    return values


def _build_config(args, stage: str) -> train.TrainConfig:
    values = _gather_overrides(args)
    values["stage"] = stage
    return train.TrainConfig.from_dict(values)


def _add_config_options(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="key = value settings file")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="override a single config key (repeatable)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="weaksal",
        description="Weakly-supervised saliency: synthesize data, train the "
                    "two stages, distill pseudo labels, evaluate, infer.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth-data", help="render the synthetic three-source dataset")
    p.add_argument("--out", required=True, help="dataset directory to create")
    p.add_argument("--n-per-source", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--image-size", type=int, default=96)

    p = sub.add_parser("train-weak", help="stage 1: category + caption networks")
    _add_config_options(p)
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True, help="checkpoint/log directory")
    p.add_argument("--resume", help="weak checkpoint to continue from")

    p = sub.add_parser("gen-pseudo", help="distill fused maps into pseudo labels")
    _add_config_options(p)
    p.add_argument("--checkpoint", required=True, help="weak checkpoint")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True, help="pseudo-label directory")
    p.add_argument("--batch-size", type=int, default=8)

    p = sub.add_parser("train-snet", help="stage 2: saliency network on pseudo labels")
    _add_config_options(p)
    p.add_argument("--pseudo", required=True, help="pseudo-label directory")
    p.add_argument("--out", required=True, help="checkpoint/log directory")
    p.add_argument("--resume", help="snet checkpoint to continue from")

    p = sub.add_parser("eval", help="score a saliency checkpoint against masks")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--out-prefix", required=True,
                   help="writes <prefix>_pr.csv, <prefix>_summary.json, "
                        "<prefix>_pr.svg")
    p.add_argument("--batch-size", type=int, default=8)

    p = sub.add_parser("infer", help="write saliency PNGs for images")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--batch-size", type=int, default=8)
    p.add_argument("images", nargs="+", help="input image paths")

    return parser


def main(argv: list | None = None) -> int:
    logging.basicConfig(level=logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)

    if args.command == "synth-data":
        records = data.synth_dataset(args.out, n_per_source=args.n_per_source,
                                     seed=args.seed, image_size=args.image_size)
        print(f"wrote {len(records)} records under {args.out}")
    elif args.command == "train-weak":
        config = _build_config(args, "weak")
        path = train.train_weak(config, args.manifest, args.out,
                                resume=args.resume)
        print(f"weak checkpoint: {path}")
    elif args.command == "gen-pseudo":
        out = train.gen_pseudo(args.checkpoint, args.manifest, args.out,
                               batch_size=args.batch_size,
                               overrides=_gather_overrides(args) or None)
        print(f"pseudo labels: {out}")
    elif args.command == "train-snet":
        config = _build_config(args, "snet")
        path = train.train_snet(config, args.pseudo, args.out,
                                resume=args.resume)
        print(f"snet checkpoint: {path}")
    elif args.command == "eval":
        report = train.evaluate(args.checkpoint, args.manifest,
                                args.out_prefix, batch_size=args.batch_size)
        print(f"mae={report.mae:.4f} max_f={report.max_f:.4f} "
              f"(reports under {args.out_prefix}_*)")
    elif args.command == "infer":
        outputs = train.infer(args.checkpoint, args.images, args.out,
                              batch_size=args.batch_size)
        for path in outputs:
            print(path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
