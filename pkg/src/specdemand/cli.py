"""Command-line entry point.

    specdemand run all --config configs/sample.json --out out
    specdemand train --out out --set models.lasso.lam=0.2

Exit codes: 0 ok, 2 bad config, 3 missing stage input, 4 numeric failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import platform
import sys

import numpy as np
import pandas as pd

from . import __version__
from .config import CONFIG_ENV, load_config
from .features import UndefinedCorrelation
from .pipeline import STAGES, MissingInput, run_stage, write_json
from .schema import ConfigError, ConvergenceError

EXIT_OK, EXIT_CONFIG, EXIT_MISSING, EXIT_NUMERIC = 0, 2, 3, 4

COMMANDS = STAGES + ("all",)


def _common(p):
    p.add_argument("--config", metavar="PATH",
                   help=f"JSON config (default: ${CONFIG_ENV}, else built-in defaults)")
    p.add_argument("--out", metavar="DIR", help="run directory")
    p.add_argument("--seed", type=int, metavar="N")
    p.add_argument("--jobs", type=int, metavar="N", help="worker processes for generation")
    p.add_argument("--set", dest="overrides", action="append", default=[], metavar="K=V",
                   help="override a config field by dotted path; V is parsed as JSON")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser():
    parser = argparse.ArgumentParser(prog="specdemand",
                                     description="Synthetic spectrum-demand pipeline.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run one stage or all of them")
    run.add_argument("stage", choices=COMMANDS)
    _common(run)
    for name in COMMANDS:
        _common(sub.add_parser(name, help=f"run the {name} stage"))
    return parser


def run_meta(cfg, stage):
    return {
        "stage": stage,
        "config_hash": cfg.hash(),
        "config": cfg.resolved(),
        "versions": {"specdemand": __version__, "numpy": np.__version__,
                     "pandas": pd.__version__, "python": platform.python_version()},
    }


def main(argv=None):
    args = build_parser().parse_args(argv)
    stage = args.stage if args.command == "run" else args.command
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    overrides = list(args.overrides)
    for flag in ("out", "seed", "jobs"):
        v = getattr(args, flag)
        if v is not None:
            overrides.append(f"{flag}={json.dumps(v)}")
    try:
        cfg = load_config(args.config, overrides)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        os.makedirs(cfg.out, exist_ok=True)
        write_json(run_meta(cfg, stage), os.path.join(cfg.out, "run_meta.json"))
        run_stage(stage, cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except MissingInput as exc:
        print(f"missing input: {exc.args[0]} (run the stage that writes it first)",
              file=sys.stderr)
        return EXIT_MISSING
    except (ConvergenceError, UndefinedCorrelation, FloatingPointError,
            np.linalg.LinAlgError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
