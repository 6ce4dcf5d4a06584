"""Command-line entry point: ``hsirecon <subcommand> [--config F] [--seed N] [--out DIR]``."""

from __future__ import annotations

import argparse
import logging
import sys

from .config import PipelineConfig
from .pipeline import STAGES, MissingArtifact, run_all


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="INI file with pipeline settings")
    common.add_argument("--seed", type=int, help="override every seed in the config")
    common.add_argument("--out", help="output directory (overrides paths.out_dir)")
    common.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")

    parser = argparse.ArgumentParser(
        prog="hsirecon",
        description="Hyperspectral attribute modelling and RGB-to-spectrum reconstruction pipeline.",
    )
    sub = parser.add_subparsers(dest="command", required=True, metavar="subcommand")
    for name, fn in STAGES.items():
        p = sub.add_parser(name, parents=[common], help=(fn.__doc__ or name).strip().splitlines()[0])
        if name == "train-recon":
            p.add_argument("--arch", help="comma-separated subset of architectures to train")
            p.add_argument("--timing", action="store_true", help="record wall-clock training time")
        if name == "eval-recon":
            p.add_argument("--timing", action="store_true", help="include recorded wall-clock times")
        if name == "predict-map":
            p.add_argument("--sample", help="scene id to map (default: first test scene)")
            p.add_argument("--range", nargs=2, type=float, metavar=("LO", "HI"), help="fixed colour range")
    p = sub.add_parser("all", parents=[common], help="run every stage in order")
    p.add_argument("--timing", action="store_true", help="record wall-clock training time")
    sub.add_parser("show-config", parents=[common], help="print the effective configuration")
    return parser


def _apply_overrides(cfg, args):
    if getattr(args, "arch", None):
        cfg.parser["recon"]["architectures"] = args.arch.replace(",", " ")
    if getattr(args, "timing", False):
        cfg.parser["report"]["timing"] = "true"
    if getattr(args, "sample", None):
        cfg.parser["map"]["sample"] = args.sample
    if getattr(args, "range", None):
        cfg.parser["map"]["range"] = f"{args.range[0]!r} {args.range[1]!r}"


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(asctime)s %(name)s: %(message)s",
    )
    try:
        cfg = PipelineConfig(args.config, seed=args.seed, out_dir=args.out)
        _apply_overrides(cfg, args)
        if args.command == "show-config":
            cfg.parser.write(sys.stdout)
            return 0
        written = run_all(cfg) if args.command == "all" else STAGES[args.command](cfg)
    except MissingArtifact as exc:
        print(f"hsirecon {args.command}: {exc}", file=sys.stderr)
        return 2
    except (FileNotFoundError, ValueError) as exc:
        print(f"hsirecon {args.command}: error: {exc}", file=sys.stderr)
        return 1
    for path in written:
        print(path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
