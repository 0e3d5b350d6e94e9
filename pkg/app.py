"""
Main entry point for the osculating calculus toolkit

Parses the command line, merges it with an optional JSON config file into a
RunConfig, configures logging and dispatches to the command layer.

    python app.py validate-algebra specs/algebras/heis.json
    python app.py parametrix specs/operators/lap_potential.json --k 3
"""

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional

from pydantic import ValidationError

from cli.commands import run
from cli.models import COMMANDS, RunConfig
from cli.validation import output_root

logger = logging.getLogger(__name__)

# flag name -> RunConfig field
FLAG_FIELDS = ("grid_x", "grid_eta", "t_levels", "t_up", "tol", "out", "seed", "k", "terms")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="osculate",
        description="Symbolic-numeric toolkit for the filtered-manifold pseudodifferential calculus",
    )
    parser.add_argument("command", choices=COMMANDS, help="Subcommand to run")
    parser.add_argument("inputs", nargs="*", help="Input spec files (JSON)")
    parser.add_argument("--grid-x", type=int, help="x-samples per axis for x-dependent families")
    parser.add_argument("--grid-eta", type=int, help="Frequency lattice points per axis")
    parser.add_argument("--t-levels", type=int, help="Dyadic t-levels K (t = 2^-K .. 1)")
    parser.add_argument("--t-up", type=int, help="Dyadic t-levels above t = 1")
    parser.add_argument("--tol", type=float, help="Check tolerance")
    parser.add_argument("--out", help="Output directory (default: $OSCULATE_OUT or ./artifacts)")
    parser.add_argument("--seed", type=int, help="Seed for randomized sweeps")
    parser.add_argument("--k", type=int, help="Neumann iterations for the parametrix")
    parser.add_argument("--terms", type=int, help="Number of expansion terms")
    parser.add_argument("--config", help="JSON file with RunConfig fields; flags override it")
    parser.add_argument("--verbose", action="store_true", help="Debug logging")
    return parser


def configure_logging(verbose: bool) -> None:
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.WARNING,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )


def resolve_config(args: argparse.Namespace) -> RunConfig:
    """
    Defaults < --config file < explicit flags.

    Raises:
        json.JSONDecodeError: the config file is not JSON
        pydantic.ValidationError: a merged field is invalid
    """
    merged: Dict[str, Any] = {"out": output_root()}
    if args.config:
        merged.update(json.loads(Path(args.config).read_text(encoding="utf-8")))
    for name in FLAG_FIELDS:
        value = getattr(args, name)
        if value is not None:
            merged[name] = value
    merged["command"] = args.command
    if args.inputs:
        merged["inputs"] = args.inputs
    merged["verbose"] = bool(args.verbose or merged.get("verbose", False))
    return RunConfig(**merged)


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    configure_logging(args.verbose)
    try:
        config = resolve_config(args)
    except (ValidationError, json.JSONDecodeError, OSError) as exc:
        print(f"❌ invalid configuration: {exc}")
        return 2
    if config.verbose:
        logging.getLogger().setLevel(logging.DEBUG)
    logger.debug("resolved configuration: %s", config.model_dump())
    return run(config)


if __name__ == "__main__":
    sys.exit(main())
