import argparse
import logging
import os
import sys
from typing import List, Optional

from adventurer.cli import (
    EXIT_USAGE,
    CliInvocation,
    execute,
    parse_lengths,
)
from adventurer.config import PRESETS
from adventurer.harness.sweep import AXIS_VALUES
from adventurer.harness.verify import FAULTS, SUITES


def _common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", dest="config_path", help="flat key=value file")
    parser.add_argument(
        "--seed", type=int, default=int(os.environ.get("ADVENTURER_SEED", "0"))
    )
    parser.add_argument(
        "--out", dest="out_dir", default=os.environ.get("ADVENTURER_OUT", "runs")
    )
    parser.add_argument(
        "--set",
        dest="overrides",
        action="append",
        default=[],
        metavar="KEY=VALUE",
        help="override one config field (repeatable)",
    )
    parser.add_argument("--preset", choices=sorted(PRESETS))
    parser.add_argument("--from-manifest", metavar="PATH", help="replay a run")
    parser.add_argument(
        "--log-level", default=os.environ.get("ADVENTURER_LOG_LEVEL", "INFO")
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="adventurer", description="Causal image modeling toolkit"
    )
    commands = parser.add_subparsers(dest="subcommand", required=True)

    verify = commands.add_parser("verify", help="run the property suites")
    verify.add_argument(
        "--suite",
        dest="suites",
        action="append",
        default=[],
        help=f"suite to run (repeatable or comma-separated): {', '.join(SUITES)}",
    )
    verify.add_argument("--quick", action="store_true")
    verify.add_argument("--fault", choices=FAULTS)

    bench = commands.add_parser("bench", help="token-mixer scaling benchmark")
    bench.add_argument("--lengths", type=parse_lengths, metavar="L1,L2,...")
    bench.add_argument("--allow-large", action="store_true")

    for name in ("train-toy", "sweep"):
        sub = commands.add_parser(name, help=f"{name} on the toy dataset")
        sub.add_argument("--steps", type=int)
        sub.add_argument("--lr", type=float)
        sub.add_argument("--count", type=int, default=32, help="toy images")
    commands.choices["sweep"].add_argument(
        "--axes",
        default="heading,flip",
        help=f"comma-separated axes: {', '.join(AXIS_VALUES)}",
    )

    params = commands.add_parser("params", help="print a parameter count")
    params.add_argument("preset_name", nargs="?", metavar="PRESET")

    inspect = commands.add_parser("inspect", help="print a checkpoint")
    inspect.add_argument("path")

    for sub in commands.choices.values():
        _common(sub)
    return parser


def to_invocation(args: argparse.Namespace) -> CliInvocation:
    values = {
        k: v
        for k, v in vars(args).items()
        if k not in ("from_manifest", "log_level", "preset_name") and v is not None
    }
    if "suites" in values:
        suites = values["suites"]
        values["suites"] = [s for item in suites for s in item.split(",") if s]
    if getattr(args, "preset_name", None):
        values["preset"] = args.preset_name.lower()
    return CliInvocation(**values)


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_USAGE if e.code else 0
    level = logging.getLevelName(args.log_level.upper())
    if not isinstance(level, int):
        print(f"error: unknown log level {args.log_level!r}")
        return EXIT_USAGE
    logging.basicConfig(
        level=level,
        format="%(asctime)s - %(levelname)s - %(message)s",
    )
    return execute(to_invocation(args), from_manifest=args.from_manifest)


if __name__ == "__main__":
    sys.exit(main())
