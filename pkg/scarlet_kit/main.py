#!/usr/bin/env python3
"""
scarlet_kit command-line entry point.

    python -m scarlet_kit gen-data --config my_experiment.json --out runs/demo
    python -m scarlet_kit train --out runs/demo
    python -m scarlet_kit search --out runs/demo --workers 4
    python -m scarlet_kit fold --out runs/demo --arch "(0,1,2,0)"
    python -m scarlet_kit rank-eval --out runs/demo
    python -m scarlet_kit diagnose --out runs/demo --baseline runs/no_els

Exit codes: 0 success, 1 runtime failure, 2 usage error, 3 invalid config.
"""

import argparse
import logging
import sys
import traceback
from typing import List, Optional, Sequence

from pydantic import ValidationError

from scarlet_kit import __version__
from scarlet_kit.config import DEFAULT_WORKERS, LOG_FORMAT, LOG_LEVEL
from scarlet_kit.errors import ConfigError, SpecError
from scarlet_kit.experiment import describe_validation_error, load_experiment_config
from scarlet_kit.pipeline import ExperimentPipeline

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2
EXIT_CONFIG = 3

# subcommand -> (stage keyword, argparse dest)
STAGE_OPTIONS = {
    "gen-data": [("csv", "csv")],
    "train": [],
    "search": [],
    "fold": [("arch", "arch"), ("train_standalone_net", "train_standalone")],
    "rank-eval": [("table", "table")],
    "diagnose": [("baseline", "baseline")],
}


def _seed(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"seed must be an unsigned integer, got {text!r}")
    if not 0 <= value < 2 ** 64:
        raise argparse.ArgumentTypeError(f"seed must be in [0, 2^64), got {value}")
    return value


def _workers(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"workers must be a positive integer, got {text!r}")
    if value < 1:
        raise argparse.ArgumentTypeError(f"workers must be >= 1, got {value}")
    return value


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="Experiment config JSON or a run manifest to replay (default: bundled config)")
    common.add_argument("--seed", type=_seed, help="Master seed; overrides every seed in the config")
    common.add_argument("--out", help="Output directory (default: config output_dir, then $SCARLET_KIT_OUT, then runs)")
    common.add_argument("--workers", type=_workers, default=DEFAULT_WORKERS, help="Worker threads for parallel stages")

    parser = argparse.ArgumentParser(
        prog="scarlet_kit",
        description="Fair supernet training with equivariant stabilizers and constrained multi-objective search",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    commands = parser.add_subparsers(dest="command", metavar="COMMAND")

    gen = commands.add_parser("gen-data", parents=[common], help="Generate and persist the dataset splits")
    gen.add_argument("--csv", action="store_true", help="Also export every split as a labeled CSV")

    commands.add_parser("train", parents=[common], help="Train the weight-sharing supernet")

    search = commands.add_parser("search", parents=[common], help="Constrained weighted NSGA-II over the supernet")
    fold = commands.add_parser("fold", parents=[common], help="Remove stabilizers from an architecture by folding")
    fold.add_argument("--arch", help='Architecture genes, e.g. "(0,1,2,0)" (default: first selected by search)')
    fold.add_argument("--train-standalone", action="store_true",
                      help="Also train the stripped network from scratch and report its test accuracy")

    rank = commands.add_parser("rank-eval", parents=[common], help="Kendall tau of one-shot vs standalone accuracy")
    rank.add_argument("--table", help="Existing ground-truth CSV (genes,acc,madds,params,seed) instead of training one")

    diagnose = commands.add_parser("diagnose", parents=[common], help="Similarity, histogram and instability diagnostics")
    diagnose.add_argument("--baseline", help="Run directory whose train_log.csv is compared against this run")

    for sub in (search, fold, rank, diagnose):
        sub.add_argument("--checkpoint", help="Supernet checkpoint (default: <out>/supernet.scnt)")
    return parser


def dispatch(argv: Optional[Sequence[str]] = None) -> int:
    """Parse `argv`, run one stage and return the process exit code."""
    argv: List[str] = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 0 for --help/--version and 2 for usage errors
        return EXIT_OK if exc.code in (None, 0) else EXIT_USAGE
    if args.command is None:
        parser.print_usage(sys.stderr)
        return EXIT_USAGE

    try:
        config = load_experiment_config(args.config).with_overrides(seed=args.seed)
        pipeline = ExperimentPipeline(
            config, output_dir=args.out, workers=args.workers, argv=argv, checkpoint=getattr(args, "checkpoint", None)
        )
        options = {keyword: getattr(args, dest) for keyword, dest in STAGE_OPTIONS[args.command]}
        pipeline.run(args.command, **options)
    except ValidationError as exc:
        logger.error(f"❌ Invalid configuration: {describe_validation_error(exc)}")
        return EXIT_CONFIG
    except (ConfigError, SpecError) as exc:
        logger.error(f"❌ Invalid configuration: {exc}")
        return EXIT_CONFIG
    except Exception as exc:
        logger.error(f"❌ {args.command} failed: {exc}")
        logger.debug(traceback.format_exc())
        return EXIT_FAILURE
    logger.info(f"✅ {args.command} completed")
    return EXIT_OK


def main():
    logging.basicConfig(level=LOG_LEVEL, format=LOG_FORMAT)
    sys.exit(dispatch())


if __name__ == "__main__":
    main()
