"""Command-line entry point.

Subcommands mirror the pipeline stages; each takes ``--config <path>`` and an
optional ``--stage-seed-override``.  Exit codes: 0 success, 2 configuration
error, 1 stage error; messages are stage-qualified on stderr.
"""

from __future__ import annotations

import argparse
import sys

from .errors import ConfigurationError, FlowPdeError
from .experiment import STAGES, load_config, run_experiment


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="flowpde",
        description="Flow-matching priors over PDE fields with guided sampling",
    )
    sub = parser.add_subparsers(dest="stage", required=True)
    for stage in STAGES:
        sp = sub.add_parser(stage, help=f"run the {stage} stage")
        sp.add_argument("--config", required=True, help="experiment config file (YAML)")
        sp.add_argument("--stage-seed-override", type=int, default=None,
                        help="replace the master-seed-derived stage seed")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
    except ConfigurationError as exc:
        print(f"config: {exc}", file=sys.stderr)
        return 2
    try:
        results = run_experiment(cfg, stages=[args.stage],
                                 seed_override=args.stage_seed_override)
    except ConfigurationError as exc:
        print(f"{args.stage}: {exc}", file=sys.stderr)
        return 2
    except FlowPdeError as exc:
        print(f"{args.stage}: {exc}", file=sys.stderr)
        return 1
    summary = results.get(args.stage, {})
    if summary.get("skipped"):
        print(f"{args.stage}: up to date, skipped")
    else:
        print(f"{args.stage}: done")
    return 0


if __name__ == "__main__":
    sys.exit(main())
