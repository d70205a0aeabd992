"""Command line entry point ``trunctx``.

    trunctx run <config.json> [--out DIR] [--seed N] [--resolution N]
    trunctx report <dir>

Exit codes: 0 success, 2 invalid input, 3 solver non-convergence.
"""

from __future__ import annotations

import argparse
import logging
import sys

from . import __version__
from .errors import ValidationError
from .experiments import EXIT_OK, EXIT_VALIDATION, run_experiment
from .report import emit_reports


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="trunctx", description="Truncated transform experiments")
    p.add_argument("--version", action="version", version=f"trunctx {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run one experiment from a JSON config")
    run.add_argument("config")
    run.add_argument("--out", help="output directory (overrides the config)")
    run.add_argument("--seed", type=int)
    run.add_argument("--resolution", type=int)
    rep = sub.add_parser("report", help="merge the runs below a directory")
    rep.add_argument("directory")
    return p


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "run":
        outcome = run_experiment(args.config, out_dir=args.out, seed=args.seed,
                                 resolution=args.resolution)
        if outcome.status != EXIT_OK:
            print(f"error: {outcome.error}", file=sys.stderr)
            return outcome.status
        print(outcome.out_dir)
        return EXIT_OK
    try:
        report = emit_reports(args.directory)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    print(report.md_path)
    if report.skipped:
        print(f"warning: skipped {report.skipped} run(s)", file=sys.stderr)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
