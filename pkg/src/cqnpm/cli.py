"""Command line entry point: ``cqnpm {gen,run,compare,validate}``."""
from __future__ import annotations

import argparse
import logging
import sys

from .config import ConfigError
from .experiment import BUNDLED, generate_files, run_experiment, validate_trace


def _parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cqnpm", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", required=True,
                       help=f"config file, or a bundled scenario: {', '.join(BUNDLED)}")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")

    common(sub.add_parser("gen", help="write phantom, coil maps, sampling and k-space files"))
    common(sub.add_parser("run", help="run the configured solver"))
    p = sub.add_parser("compare", help="run cqnpm, apg, pg and gd on one scenario")
    common(p)
    p.add_argument("--parallel", action="store_true", help="run the solvers in separate processes")
    p = sub.add_parser("validate", help="convergence reports for an existing trace")
    common(p)
    p.add_argument("--trace", required=True, help="trace CSV written by run/compare")
    p.add_argument("--fstar", type=float, default=None,
                   help="optimal cost; estimated with 500 APG iterations if omitted")
    return parser


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "gen":
            out = generate_files(args.config, args.out, args.seed)
        elif args.command == "validate":
            res = validate_trace(args.trace, args.config, args.out, args.fstar)
            out = args.out
            print(f"fstar={res['fstar']!r} validation_ok={str(res['validation_ok']).lower()}")
        else:
            out = run_experiment(args.config, args.out, args.command, args.seed,
                                 getattr(args, "parallel", False))
    except (ConfigError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(f"wrote {out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
