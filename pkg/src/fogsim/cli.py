"""Command line: ``fogsim run|sweep <scenario> [--out DIR] [--seed N] [--trace]``.

Exit codes: 0 success, 1 invalid scenario, 2 I/O failure.
"""

from __future__ import annotations

import argparse
import logging
import sys

from fogsim.experiment import run_experiment, summary_csv, write_reports
from fogsim.scenario import ScenarioError, load_scenario

log = logging.getLogger("fogsim")

EXIT_OK, EXIT_INVALID, EXIT_IO = 0, 1, 2


def _u64(text: str) -> int:
    value = int(text)
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError("seed must fit in 64 unsigned bits")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fogsim", description="Fog vs cloud-only discrete-event simulator")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("run", "one cloud-only/fog comparison at the scenario's device count"),
        ("sweep", "comparisons for every entry of user_counts"),
    ):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("scenario", help="scenario file (bundled names like default.scenario also work)")
        p.add_argument("--out", default="out", help="output directory (default: ./out)")
        p.add_argument("--seed", type=_u64, help="override the scenario seed")
        p.add_argument("--trace", action="store_true", help="also write trace_<n>_{cloud,fog}.csv")
        p.add_argument("--jobs", type=int, default=1, help="parallel worker processes for sweeps")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO, format="%(message)s")
    try:
        config = load_scenario(args.scenario)
    except ScenarioError as exc:
        log.error("invalid scenario: %s", exc)
        return EXIT_INVALID
    except OSError as exc:
        log.error("cannot read scenario: %s", exc)
        return EXIT_IO
    if args.seed is not None:
        config = config.with_seed(args.seed)
    counts = [config.users] if args.command == "run" else list(config.user_counts)
    try:
        result = run_experiment(config, counts, keep_trace=args.trace, jobs=args.jobs)
    except ScenarioError as exc:
        log.error("invalid scenario: %s", exc)
        return EXIT_INVALID
    try:
        files = write_reports(result, args.out)
    except OSError as exc:
        log.error("cannot write reports: %s", exc)
        return EXIT_IO
    sys.stdout.write(summary_csv(result))
    log.info("wrote %d files to %s", len(files), args.out)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
