"""Command-line front end over the experiment harness.

One subcommand per stage; global flags override the matching config fields.
Exit codes: 0 success, 2 usage or dependency error.
"""

from __future__ import annotations

import argparse
import dataclasses
import os
import sys

from .harness import ExperimentConfig, run_experiment
from .training import TrainingDiverged

_COMMANDS = ("train-ff", "train-fb", "train-hp", "eval", "attack", "ablate", "report")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="FILE.json",
                        help="experiment config; defaults apply when omitted")
    common.add_argument("--seed", type=int, metavar="U64", help="override config seed")
    common.add_argument("--out-dir", metavar="PATH", help="override artifact directory")
    common.add_argument("--data", metavar="PATH",
                        help="directory of CIFAR-10 binary batches")
    common.add_argument("--threads", type=int, metavar="N",
                        help="cap BLAS thread pools (best effort)")

    parser = argparse.ArgumentParser(
        prog="pcdyn",
        description="Train, evaluate, and attack the predictive-coding classifier.",
    )
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")
    descriptions = {
        "train-ff": "supervised training of the forward path (writes ff.pcw)",
        "train-fb": "feedback decoder training (writes fb_unsup.pcw or fb_sup.pcw)",
        "train-hp": "constrained hyper-parameter optimization over the noise grid",
        "eval": "unrolled accuracy per condition and time-step (writes metrics.csv)",
        "attack": "targeted L-inf attack sweep (writes attack.json / attack.csv)",
        "ablate": "zero_beta / zero_alpha hyper-parameter runs",
        "report": "SVG charts and the relative-HP table from persisted artifacts",
    }
    for name in _COMMANDS:
        sub.add_parser(name, parents=[common], help=descriptions[name],
                       description=descriptions[name])
    return parser


def _apply_overrides(config: ExperimentConfig, args) -> ExperimentConfig:
    if args.seed is not None:
        if args.seed < 0:
            raise ValueError(f"--seed must be non-negative, got {args.seed}")
        config = dataclasses.replace(config, seed=args.seed)
    if args.out_dir is not None:
        config = dataclasses.replace(config, out_dir=args.out_dir)
    if args.data is not None:
        config = dataclasses.replace(
            config, data=dataclasses.replace(config.data, dir=args.data))
    return config


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.threads is not None and args.threads >= 1:
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
            os.environ[var] = str(args.threads)
    try:
        config = (ExperimentConfig.from_json_file(args.config)
                  if args.config else ExperimentConfig())
        config = _apply_overrides(config, args)
        outputs = run_experiment(config, stages=(args.command,))
    except (ValueError, FileNotFoundError, TrainingDiverged) as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    for path in outputs["written"]:
        print(f"wrote {path}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
