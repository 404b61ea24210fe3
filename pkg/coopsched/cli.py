"""
Command line interface: ``coopsched run`` simulates one scenario, ``coopsched sweep`` a grid.
"""

import argparse
import logging
import sys
from typing import List, Optional

from coopsched.cache import RunResultCache
from coopsched.config import CONTROLLERS, load_scenario
from coopsched.exceptions import ConfigurationError, CoopSchedError
from coopsched.experiments import (
    PRESETS,
    format_table,
    improvement_table,
    results_frame,
    run_scenario,
    sweep,
    write_results,
)
from coopsched.version import __version__

LOG = logging.getLogger(__name__)

DESK_DURATION = 1200.0
DESK_WINDOW = (300.0, 900.0)


def _float_list(text: str) -> List[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma separated numbers, got {text!r}")


def _int_list(text: str) -> List[int]:
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma separated integers, got {text!r}")


def _str_list(text: str) -> List[str]:
    return [x.strip() for x in text.split(",") if x.strip()]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="coopsched",
        description="Schedule-driven and cooperative traffic signal control experiments.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    verbosity = parser.add_mutually_exclusive_group()
    verbosity.add_argument("-v", "--verbose", action="store_true", help="log per-tick decisions")
    verbosity.add_argument("-q", "--quiet", action="store_true", help="only log warnings and errors")
    subparsers = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--scenario", default=None, help="scenario file or bundled scenario name")
    common.add_argument("--duration", type=float, default=None, help="simulated seconds")
    common.add_argument("--desk", action="store_true", help=f"{DESK_DURATION:.0f}s runs measuring {DESK_WINDOW}")
    common.add_argument("--out", default=None, help="CSV file for the per-run results")
    common.add_argument("--no-cache", action="store_true", help="do not read or write the result cache")

    run = subparsers.add_parser("run", parents=[common], help="simulate one scenario")
    run.add_argument("--seed", type=int, default=0)
    run.add_argument("--controller", choices=CONTROLLERS + ("cooperative",), default=None)
    run.add_argument("--demand", default=None, help="low, med or high")
    run.add_argument("--interval", type=float, default=None, help="clustering interval in seconds")
    run.add_argument("--penetration", type=float, default=None, help="CAV share in [0, 1]")

    grid = subparsers.add_parser("sweep", parents=[common], help="simulate a grid of scenarios")
    grid.add_argument("--preset", choices=sorted(PRESETS), default=None)
    seeds = grid.add_mutually_exclusive_group()
    seeds.add_argument("--seeds", type=_int_list, default=None, help="comma separated seeds")
    seeds.add_argument("--seed", type=int, default=None, help="a single seed")
    grid.add_argument("--controller", type=_str_list, default=None, help="comma separated controllers")
    grid.add_argument("--demand", type=_str_list, default=None, help="comma separated demand tiers")
    grid.add_argument("--interval", type=_float_list, default=None, help="comma separated intervals")
    grid.add_argument("--penetration", type=_float_list, default=None, help="comma separated CAV shares")
    grid.add_argument("--jobs", type=int, default=1, help="parallel workers, -1 for all cores")
    return parser


def configure_logging(verbose: bool = False, quiet: bool = False):
    level = logging.DEBUG if verbose else logging.WARNING if quiet else logging.INFO
    logging.basicConfig(level=level, format="%(asctime)s %(levelname)s %(name)s: %(message)s")


def _scenario(args):
    config = load_scenario(args.scenario)
    if args.desk:
        config = config.with_overrides(duration=DESK_DURATION, window=list(DESK_WINDOW))
    if args.duration is not None:
        config = config.with_overrides(duration=args.duration)
    return config


def _run(args) -> None:
    config = _scenario(args).with_overrides(
        controller=args.controller,
        demand=args.demand,
        interval=args.interval,
        penetration=args.penetration,
    )
    cache = None if args.no_cache else RunResultCache()
    result = run_scenario(config, args.seed, cache=cache)
    print(format_table(results_frame([result])))
    if result.undefined:
        print("no vehicle measured, mean delay undefined")
    if args.out:
        write_results([result], args.out)


def _sweep(args) -> None:
    config = _scenario(args)
    axes = dict(PRESETS[args.preset]) if args.preset else {}
    for name, value in (
        ("controllers", args.controller),
        ("demands", args.demand),
        ("intervals", args.interval),
        ("penetrations", args.penetration),
    ):
        if value is not None:
            axes[name] = value
    cache = None if args.no_cache else RunResultCache()
    seeds = [args.seed] if args.seed is not None else args.seeds
    outcome = sweep(config, seeds=seeds, n_jobs=args.jobs, cache=cache, **axes)
    print(format_table(outcome.table))
    if any(r.controller == "fixed" for r in outcome.results) and any(r.controller != "fixed" for r in outcome.results):
        print()
        print(format_table(improvement_table(outcome.results)))
    if args.out:
        write_results(outcome.results, args.out)


def main(argv: Optional[List[str]] = None) -> int:
    """Entry point. Returns 0 on success, 2 for invalid configuration and 1 for other failures."""
    args = build_parser().parse_args(argv)
    configure_logging(args.verbose, args.quiet)
    try:
        if args.command == "run":
            _run(args)
        else:
            _sweep(args)
    except ConfigurationError as e:
        print(f"coopsched: configuration error: {e}", file=sys.stderr)
        return 2
    except CoopSchedError as e:
        print(f"coopsched: {e}", file=sys.stderr)
        return 1
    return 0
