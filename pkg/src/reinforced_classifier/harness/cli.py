"""``python3 -m reinforced_classifier {generate,train,compare,report}``."""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

from ..data import DataError
from ..engine import NumericalError, ShapeError, SpecError
from .config import ConfigError, default_config, load_config
from .runs import HarnessError, cmd_compare, cmd_generate, cmd_report, cmd_train


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="flat key = value config file")
    common.add_argument("--seed", type=int, help="override the training seed")
    common.add_argument("--out", type=Path, default=Path("out"), help="output directory")
    parser = argparse.ArgumentParser(prog="python3 -m reinforced_classifier", parents=[common])
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("generate", parents=[common], help="write dataset.csv + manifest.txt")
    sub.add_parser("train", parents=[common], help="one run: curves.csv, checkpoint, manifest")
    sub.add_parser("compare", parents=[common], help="methods x splits study with report.csv")
    sub.add_parser("report", parents=[common], help="recompute report.csv from runs.csv")
    return parser


def run(argv=None) -> None:
    args = build_parser().parse_args(argv)
    config_path = args.config
    if config_path is None and args.command == "report" and (args.out / "manifest.txt").exists():
        config_path = args.out / "manifest.txt"
    cfg = load_config(config_path, args.seed) if config_path else default_config(args.seed)
    if args.command == "generate":
        path = cmd_generate(cfg, args.out)
        print(f"wrote {path}")
    elif args.command == "train":
        outcome = cmd_train(cfg, args.out)
        print(f"optimal epoch {outcome.records['outcome.optimal_epoch']}: "
              f"{outcome.records['outcome.table_row']}")
    elif args.command == "compare":
        rows = cmd_compare(cfg, args.out, progress=lambda r: print(
            f"{r['method']:>12s} split {r['split']}: test error {r['test_error']:.2f}",
            flush=True))
        print(f"{len(rows)} runs; report in {args.out / 'report.csv'}")
    else:
        cmd_report(cfg, args.out)
        print(f"wrote {args.out / 'report.csv'}")


def main(argv=None) -> int:
    try:
        run(argv)
    except (ConfigError, DataError, HarnessError, SpecError, ShapeError, NumericalError,
            ValueError, OSError) as exc:
        print(f"error: {exc}".splitlines()[0], file=sys.stderr)
        return 1
    return 0
