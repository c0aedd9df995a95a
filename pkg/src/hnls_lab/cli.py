"""Command line entry point: run <config>, report <dir>, version."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import __version__
from .runner import EXIT_CHECK_FAILED, IntegrityError, ReportError, report, run


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="hnls-lab", description="Dispersive-estimate experiments on the torus.")
    sub = parser.add_subparsers(dest="command", required=True)
    p_run = sub.add_parser("run", help="execute a config file")
    p_run.add_argument("config")
    p_run.add_argument("--out", default=None, help="output directory (default: $HNLS_LAB_OUTPUT_ROOT/<name>-<kind>-<hash>)")
    p_rep = sub.add_parser("report", help="summarise a run directory or a directory of runs")
    p_rep.add_argument("directory")
    sub.add_parser("version")
    args = parser.parse_args(argv)

    if args.command == "version":
        print(__version__)
        return 0
    if args.command == "run":
        outcome = run(args.config, args.out)
        if outcome.message:
            print(outcome.message, file=sys.stderr)
        if outcome.directory is not None:
            print(outcome.directory)
        return outcome.status
    try:
        report(args.directory)
    except (IntegrityError, ReportError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CHECK_FAILED
    print((Path(args.directory) / "summary.txt").read_text(encoding="utf-8"), end="")
    return 0


if __name__ == "__main__":
    sys.exit(main())
