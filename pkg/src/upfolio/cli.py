"""Experiment command line.

    upfolio <scenario> --config <file> --out <dir> [--seed <u64>] [--no-figures]

Scenarios: counterexample, universality, ldp, fgp-verify. Exit codes follow
CI conventions: 0 when every configured check passes, 1 on a tolerance
failure, 2 on a configuration error.
"""

from __future__ import annotations

import argparse
import sys

from .config import load_config
from .exceptions import ConfigError
from .scenarios import RUNNERS

_SUBCOMMANDS = {
    "counterexample": "counterexample",
    "universality": "universality",
    "ldp": "ldp",
    "fgp-verify": "fgp_verify",
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="upfolio",
        description="Universal-portfolio experiments: wealth concentration, "
                    "universality, and functionally generated portfolio checks.")
    sub = parser.add_subparsers(dest="command", required=True)
    for command, scenario in _SUBCOMMANDS.items():
        p = sub.add_parser(command, help=f"run the {scenario} scenario")
        p.add_argument("--config", required=True, help="scenario config file (INI)")
        p.add_argument("--out", required=True, help="output directory for artifacts")
        p.add_argument("--seed", type=int, default=None,
                       help="override the config seed (64-bit integer)")
        p.add_argument("--no-figures", action="store_true",
                       help="skip figure rendering, emit CSVs only")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    scenario = _SUBCOMMANDS[args.command]
    try:
        config = load_config(args.config, scenario, seed_override=args.seed)
        result = RUNNERS[scenario](config, args.out, figures=not args.no_figures)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    status = "PASS" if result.passed else "FAIL"
    detail = ", ".join(f"{k}={v:.6g}" if isinstance(v, float) else f"{k}={v}"
                       for k, v in result.metrics.items())
    print(f"{status} {scenario}: {detail}")
    for path in result.artifacts:
        print(f"  wrote {path}")
    return 0 if result.passed else 1


def entry() -> None:
    raise SystemExit(main())


if __name__ == "__main__":
    entry()
