"""Command-line entry point.

Exit codes: 0 success, 1 usage or validation error, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys

from .errors import AirlinkError, ConfigurationError, ValidationError
from .workbench import (compare_systems, emit_preset, list_presets, load_config, parse_config,
                        run_scenario)
from .workbench.runner import RunFailure

EXIT_OK, EXIT_VALIDATION, EXIT_RUNTIME = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_VALIDATION, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="airlink", description="Seeded multipath link-level scenarios.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    run = sub.add_parser("run", help="execute one scenario config")
    run.add_argument("config", help="scenario JSON file")
    run.add_argument("--out", help="output directory (default: $AIRLINK_OUT/<name>)")
    run.add_argument("--seed", type=int, help="override the config seed")
    run.add_argument("--workers", type=int, default=1, help="parallel SNR points (output is unchanged)")

    pre = sub.add_parser("presets", help="bundled scenario presets")
    psub = pre.add_subparsers(dest="action", required=True, parser_class=_Parser)
    psub.add_parser("list", help="print preset names")
    emit = psub.add_parser("emit", help="write <name>.json")
    emit.add_argument("name")
    emit.add_argument("--out", default=".", help="directory to write into")

    cmp_ = sub.add_parser("compare", help="run several systems over one channel")
    cmp_.add_argument("configs", nargs="+")
    cmp_.add_argument("--out", help="output directory")
    cmp_.add_argument("--workers", type=int, default=1)
    return p


def _load(path, seed=None):
    cfg = load_config(path)
    if seed is not None:
        # revalidate so an out-of-range seed is reported like any other field
        cfg = parse_config({**cfg.model_dump(mode="json"), "seed": seed})
    return cfg


def _dispatch(args) -> int:
    if args.command == "presets":
        if args.action == "list":
            print("\n".join(list_presets()))
        else:
            print(emit_preset(args.name, args.out))
        return EXIT_OK
    if args.command == "run":
        report = run_scenario(_load(args.config, args.seed), args.out, args.workers)
        print(report.out_dir)
        return EXIT_OK
    result = compare_systems([_load(c) for c in args.configs], args.out, args.workers)
    print(json.dumps(result["systems"], indent=2, sort_keys=True))
    return EXIT_OK


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_VALIDATION
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return _dispatch(args)
    except ValidationError as exc:
        print(f"airlink: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except ConfigurationError as exc:
        print(f"airlink: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except RunFailure as exc:
        print(f"airlink: run failed: {exc} (partial manifest written)", file=sys.stderr)
        return EXIT_RUNTIME
    except (AirlinkError, ArithmeticError, OSError) as exc:
        print(f"airlink: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
