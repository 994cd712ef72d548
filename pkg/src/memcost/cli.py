"""Command-line interface.

    memcost <command> --config <path> [--out-dir <path>] [eval flags]

Exit codes: 0 success, 1 input/config error, 2 internal error.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from memcost import __version__
from memcost.config import load_config
from memcost.errors import MemcostError
from memcost.pipeline import COMMANDS, run_pipeline

logger = logging.getLogger("memcost")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="memcost",
        description="Dependency-based maintenance-cost metrics and reading-time evaluation.",
    )
    parser.add_argument("--version", action="version", version=f"memcost {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for command in COMMANDS:
        p = sub.add_parser(command, help=f"run the {command} stage")
        p.add_argument("--config", required=True, type=Path, help="pipeline config (YAML)")
        p.add_argument(
            "--out-dir", type=Path, default=Path("memcost_out"), help="artifact directory"
        )
        p.add_argument("-v", "--verbose", action="store_true", help="debug logging")
        if command == "eval":
            p.add_argument(
                "--base",
                nargs="+",
                default=None,
                help="base-model predictors (default: the control set)",
            )
            p.add_argument(
                "--add", nargs="+", default=None, help="predictors added in the full model"
            )
            p.add_argument("--name", default=None, help="artifact name for this comparison")
            p.add_argument("--k", type=int, default=None, help="number of CV folds")
            p.add_argument("--repeats", type=int, default=None, help="CV repetitions")
            p.add_argument("--n-perm", type=int, default=None, help="permutation count")
            p.add_argument("--seed", type=int, default=None, help="override config seed")
            p.add_argument(
                "--ablation",
                action="store_true",
                help="run the leave-one-out ablation over the base predictors",
            )
            p.add_argument(
                "--compare-with",
                default=None,
                help="pair this run's full model against a persisted eval result by name",
            )
    return parser


def _split_names(values: list[str] | None) -> list[str] | None:
    if values is None:
        return None
    names: list[str] = []
    for value in values:
        names.extend(v for v in value.split(",") if v)
    return names


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        config = load_config(args.config)
        kwargs = {}
        if args.command == "eval":
            kwargs = {
                "base": _split_names(args.base),
                "add": _split_names(args.add),
                "name": args.name,
                "k": args.k,
                "repeats": args.repeats,
                "n_perm": args.n_perm,
                "seed": args.seed,
                "ablation": args.ablation,
                "compare_with": args.compare_with,
            }
        outputs = run_pipeline(config, args.command, args.out_dir, **kwargs)
    except MemcostError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # pragma: no cover - defensive
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    for name in outputs:
        print(Path(args.out_dir) / name)
    return 0


if __name__ == "__main__":
    sys.exit(main())
