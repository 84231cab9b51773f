"""``lyatensor`` command line."""
from __future__ import annotations

import argparse
import sys

from .config import ConfigError, load_config
from .runner import EXIT_CONFIG, EXIT_IO, EXIT_NUMERIC, EXIT_OK, run
from .systems import REGISTRY


def _cmd_run(args) -> int:
    try:
        cfg = load_config(args.config)
    except OSError as exc:
        print(f"lyatensor: cannot read {args.config}: {exc}", file=sys.stderr)
        return EXIT_IO
    except ConfigError as exc:
        print(f"lyatensor: {args.config}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if args.seed is not None:
        try:
            cfg = cfg.with_seed(args.seed)
        except ConfigError as exc:
            print(f"lyatensor: {exc}", file=sys.stderr)
            return EXIT_CONFIG
    return run(cfg, args.out, quiet=args.quiet)


def _cmd_systems(args) -> int:
    for name, entry in REGISTRY.items():
        params = ", ".join(f"{k}={v:g}" for k, v in entry.defaults.items())
        print(f"{name:<18} dim={entry.dim}  {params}")
        print(f"{'':<18} {entry.description}; y0={list(entry.y0)}, window={list(entry.window)}")
    return EXIT_OK


def _cmd_check(args) -> int:
    from .checks import invariant_suite

    results = invariant_suite(args.seed)
    for name, ok, value in results:
        print(f"{'PASS' if ok else 'FAIL'}  {name}  ({value:.3g})")
    failed = sum(not ok for _, ok, _ in results)
    print(f"{len(results) - failed}/{len(results)} checks passed")
    return EXIT_OK if failed == 0 else EXIT_NUMERIC


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lyatensor", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run the analysis described by a TOML config")
    p.add_argument("config")
    p.add_argument("--out", default=".", help="output directory (default: current)")
    p.add_argument("--seed", type=int, default=None, help="override run.seed")
    p.add_argument("--quiet", action="store_true")
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("systems", help="list built-in systems")
    p.set_defaults(func=_cmd_systems)

    p = sub.add_parser("check", help="run the built-in invariant suite")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_check)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
