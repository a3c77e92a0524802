"""Command-line pipeline: simulate / correct / fit / evaluate / reproduce.

All subcommands read one JSON experiment config (``--config``); individual
keys can be overridden with ``--set key=value``.  Exit codes: 0 success,
2 usage or configuration error, 3 data error, 4 failed acceptance report
under ``reproduce --strict``.
"""

from __future__ import annotations

import argparse
import json
import sys

from . import __version__
from .config import load_config
from .errors import ConfigError, DataError
from .pipeline import run_correct, run_evaluate, run_fit, run_reproduce, run_simulate

FILTER_CHOICES = ("TV", "CF", "MPPCA")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dwipc",
        description="Phase correction experiments on synthetic diffusion MRI data.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", required=True, help="experiment config or manifest JSON")
        p.add_argument(
            "--set",
            dest="overrides",
            action="append",
            default=[],
            metavar="KEY=VALUE",
            help="override a config key (dotted path, JSON value)",
        )
        p.add_argument("--jobs", type=int, default=None, help="worker thread cap")

    p_sim = sub.add_parser("simulate", help="generate phantom, ground truth, and noisy series")
    common(p_sim)

    p_cor = sub.add_parser("correct", help="phase-correct the simulated series with one filter")
    common(p_cor)
    p_cor.add_argument("--filter", required=True, choices=FILTER_CHOICES, help="filter to apply")
    p_cor.add_argument(
        "--calibration",
        choices=("on", "off", "both"),
        default=None,
        help="calibration variants to run (default: from config)",
    )

    p_fit = sub.add_parser("fit", help="fit tensors and FA for a corrected series")
    common(p_fit)
    p_fit.add_argument(
        "--input",
        required=True,
        help="method directory name (e.g. TV-new) or MAG for the uncorrected baseline",
    )

    p_eval = sub.add_parser("evaluate", help="metrics, error maps, and renders for all methods")
    common(p_eval)

    p_rep = sub.add_parser("reproduce", help="full pipeline plus pass/fail report")
    common(p_rep)
    p_rep.add_argument(
        "--strict", action="store_true", help="exit 4 if any report criterion fails"
    )
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = load_config(args.config, args.overrides)
        if args.command == "simulate":
            run_simulate(cfg)
        elif args.command == "correct":
            variants = None
            if args.calibration == "on":
                variants = (True,)
            elif args.calibration == "off":
                variants = (False,)
            elif args.calibration == "both":
                variants = (False, True)
            run_correct(cfg, args.filter, variants=variants, jobs=args.jobs)
        elif args.command == "fit":
            run_fit(cfg, args.input)
        elif args.command == "evaluate":
            summary = run_evaluate(cfg)["summary"]
            print(json.dumps({"methods": summary}, sort_keys=True, indent=2))
        elif args.command == "reproduce":
            report = run_reproduce(cfg, jobs=args.jobs)
            print(json.dumps({"pass": report["pass"]}, indent=2))
            if args.strict and not report["pass"]:
                return 4
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
