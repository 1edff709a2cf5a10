"""Command-line front end: scenario commands and report/CSV emission.

Exit codes: 0 success, 2 numerical solver failure, 3 config error.
"""

from __future__ import annotations

import argparse
import sys

from .measure_eval import UnsupportedLiabilityError
from .pde_kernels import GridStabilityError, SolverFailureError
from .scenario import COMMANDS, ConfigError, run_scenario

EXIT_OK = 0
EXIT_SOLVER_FAILURE = 2
EXIT_CONFIG_ERROR = 3


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="uvolmax",
        description=("Robust utility maximization under volatility uncertainty: "
                     "worst-case values, volatility paths, strategies, and "
                     "indifference prices from scenario files."))
    sub = parser.add_subparsers(dest="command", required=True)

    descriptions = {
        "value": "robust value, worst-case volatility, and strategy report",
        "worst-vol": "worst-case volatility path as CSV (t, a_star)",
        "strategy": "optimal strategy field as CSV (t, x, strategy)",
        "indiff": "indifference price of the scenario liability",
        "minmax-check": "gap between the two optimization orders",
        "convergence": "value table under grid refinement",
        "gen-eval": "driver values on a (z, a) grid as CSV",
        "per-measure": "single-path valuation (report plus field CSV)",
    }
    for name in COMMANDS:
        p = sub.add_parser(name, help=descriptions[name])
        p.add_argument("config", help="scenario JSON file")
        p.add_argument("--out-dir", default=None,
                       help="directory for reports and CSVs (default: next to config)")
        p.add_argument("--grid-scale", type=int, default=1, metavar="K",
                       help="multiply n_time and n_space by K")
        p.add_argument("--quiet", action="store_true",
                       help="suppress the per-file progress lines")
        if name == "gen-eval":
            p.add_argument("--t", type=float, default=0.0, help="evaluation time")
            p.add_argument("--n-z", type=int, default=21, help="control grid size")
            p.add_argument("--n-a", type=int, default=9, help="volatility grid size")
            p.add_argument("--z-max", type=float, default=2.0,
                           help="half-width of the control grid")
        if name == "per-measure":
            p.add_argument("--constant-a", type=float, default=None,
                           help="evaluate the constant path at this level")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    extra = {}
    if args.command == "gen-eval":
        extra = {"t": args.t, "n_z": args.n_z, "n_a": args.n_a, "z_max": args.z_max}
    if args.command == "per-measure" and args.constant_a is not None:
        extra = {"constant_a": args.constant_a}
    try:
        return run_scenario(args.config, args.command, out_dir=args.out_dir,
                            grid_scale=args.grid_scale, quiet=args.quiet,
                            extra=extra)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG_ERROR
    except (UnsupportedLiabilityError, ValueError) as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG_ERROR
    except (SolverFailureError, GridStabilityError) as e:
        print(f"solver failure: {e}", file=sys.stderr)
        return EXIT_SOLVER_FAILURE


if __name__ == "__main__":
    sys.exit(main())
