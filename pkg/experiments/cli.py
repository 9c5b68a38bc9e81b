"""Command-line interface for generating data, training, adapting and flying."""

import argparse
import logging
import sys

import torch

from experiments import runner
from experiments.config_loader import load_experiment_config
from utils.env_validation import settings

logger = logging.getLogger(__name__)

COMMANDS = {
    "gen": "generate the task's datasets and manifest",
    "train": "train the source-only baseline (lambda = 0) for every seed",
    "adapt": "adapt every seed's baseline to the target with the MMD regularizer",
    "eval": "evaluate checkpoints on the target test split",
    "fly": "run closed-loop episodes on target-domain worlds",
    "sweep-lambda": "adapt once per (lambda, seed) over lambda_grid",
    "ablate-sources": "baseline and adapted accuracy per source subset of the task",
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="trail-adapt", description="Trail-direction classification with MK-MMD domain adaptation"
    )
    subparsers = parser.add_subparsers(dest="command", required=True)
    for name, help_text in COMMANDS.items():
        sub = subparsers.add_parser(name, help=help_text)
        sub.add_argument("--config", type=str, help="key=value experiment configuration file")
        sub.add_argument("--out", type=str, default=None, help="output directory (default: FTRAIL_OUTPUT_DIR)")
        sub.add_argument("--seed", type=int, default=None, help="run a single seed instead of the configured list")
        if name in ("eval", "fly"):
            sub.add_argument("--checkpoint", type=str, default=None, help="FTNN checkpoint to use")
        if name == "fly":
            sub.add_argument("--oracle", action="store_true", help="add the geometry oracle as a reference row")
    return parser


def run(args: argparse.Namespace) -> None:
    cfg = load_experiment_config(args.config)
    if args.seed is not None:
        cfg = cfg.model_copy(update={"seeds": [args.seed]})
    out = args.out or settings.OUTPUT_DIR

    torch.set_num_threads(settings.NUM_THREADS)
    torch.use_deterministic_algorithms(True)
    logger.info(f"Running '{args.command}' for task '{cfg.task}' into {out}")

    if args.command == "gen":
        runner.cmd_gen(cfg, out)
    elif args.command == "train":
        runner.cmd_train(cfg, out)
    elif args.command == "adapt":
        runner.cmd_adapt(cfg, out)
    elif args.command == "eval":
        runner.cmd_eval(cfg, out, checkpoint=args.checkpoint)
    elif args.command == "fly":
        runner.cmd_fly(cfg, out, checkpoint=args.checkpoint, oracle=args.oracle)
    elif args.command == "sweep-lambda":
        runner.cmd_sweep_lambda(cfg, out)
    elif args.command == "ablate-sources":
        runner.cmd_ablate_sources(cfg, out)


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        run(args)
    except (ValueError, OSError) as e:
        print("error: " + " ".join(str(e).split()), file=sys.stderr)
        return 1
    return 0
