"""``trps-lab`` command line.

    trps-lab <scenario> --config PATH [--seed N] [--out DIR] [--no-plotdata]
    trps-lab validate --config PATH

Exit codes: 0 success, 1 usage error, 2 invariant violation.
"""

from __future__ import annotations

import argparse
import logging
import sys

from .errors import TrpsLabError
from .harness import SCENARIOS, ExperimentConfig, UsageError, emit_plotdata, run_scenario, validate

EXIT_OK, EXIT_USAGE, EXIT_VIOLATION = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="trps-lab", description=__doc__.split("\n")[0])
    parser.add_argument("command", choices=(*SCENARIOS, "validate"))
    parser.add_argument("--config", required=True, help="key = value configuration file")
    parser.add_argument("--seed", type=int, help="override the configured seed")
    parser.add_argument("--out", help="output directory (overrides output.dir)")
    parser.add_argument("--no-plotdata", action="store_true",
                        help="skip the plot-ready CSV export")
    parser.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        overrides = {"seed": args.seed}
        if args.command != "validate":
            overrides["scenario"] = args.command
        cfg = ExperimentConfig.from_file(args.config, **overrides)
    except TrpsLabError as exc:
        print(f"trps-lab: {exc}", file=sys.stderr)
        return EXIT_USAGE

    if args.command == "validate":
        problems = validate(cfg)
        for p in problems:
            print(p)
        if not problems:
            print("ok")
        return EXIT_OK if not problems else EXIT_USAGE

    try:
        record = run_scenario(cfg, out_dir=args.out)
    except UsageError as exc:
        print(f"trps-lab: {exc}", file=sys.stderr)
        return EXIT_USAGE
    out = args.out or cfg["output.dir"]
    if not args.no_plotdata:
        emit_plotdata(record, f"{out}/plotdata")
    for name, ok in sorted(record.verdicts.items()):
        print(f"{'PASS' if ok else 'FAIL'} {name}")
    if record.error:
        print(f"ERROR {record.error}", file=sys.stderr)
    print(f"record: {out}/record.json ({record.config_hash[:12]})")
    return record.exit_code


if __name__ == "__main__":
    sys.exit(main())
