"""Command-line scenario runner.

``sonoswarm run <scenario> [--config FILE] [--seed N] [--out DIR]`` executes
one named scenario; ``sonoswarm list`` enumerates them.  Exit codes:
0 success, 2 usage error, 3 config validation error, 4 runtime failure.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .scenarios import (
    SCENARIO_DEFAULTS,
    SCENARIO_SUMMARIES,
    ConfigError,
    load_config,
    run_scenario,
)

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_CONFIG = 3
EXIT_RUNTIME = 4


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sonoswarm",
        description="Run nanoparticle-swarm imaging scenarios",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="execute one scenario")
    run_p.add_argument("scenario", choices=sorted(SCENARIO_DEFAULTS))
    run_p.add_argument("--config", type=Path, default=None, help="YAML config file")
    run_p.add_argument("--seed", type=int, default=None, help="override the run seed")
    run_p.add_argument(
        "--out", type=Path, default=None, help="output directory (default out/<scenario>)"
    )

    sub.add_parser("list", help="list available scenarios")
    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else EXIT_OK

    if args.command == "list":
        for name in sorted(SCENARIO_DEFAULTS):
            print(f"{name:18s} {SCENARIO_SUMMARIES[name]}")
        return EXIT_OK

    try:
        cfg = load_config(args.scenario, args.config, args.seed)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    out = args.out if args.out is not None else Path("out") / args.scenario
    try:
        run_scenario(args.scenario, cfg, out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001 - map any failure to exit 4
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    print(f"wrote {out}")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
