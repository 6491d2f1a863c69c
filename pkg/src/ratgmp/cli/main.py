"""``ratgmp`` command line.

Exit codes: 0 certified, 2 bounds only, 3 solver failure, 4 input error.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from ..errors import ModelingError, OrderError, ParseError
from .hierarchy import emit_report, run_hierarchy
from .problemfile import parse_problem
from .shekel import read_shekel, shekel_problem

EXIT_INPUT = 4


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="ratgmp",
        description="Global lower bounds and certified minimizers for sums of rational functions.")
    ap.add_argument("problem", nargs="?", help="problem file (.rp)")
    ap.add_argument("--order", metavar="A[:B]", help="order range (default k_min..k_min+5)")
    ap.add_argument("--sparse", action="store_true", default=None,
                    help="use the sparse hierarchy (cliques from the file or --infer-cliques)")
    ap.add_argument("--infer-cliques", action="store_true", default=None,
                    help="take term supports as cliques")
    ap.add_argument("--epigraph", choices=["ineq", "eq"], help="relax the epigraph lifting")
    ap.add_argument("--lift-bounds", metavar="LO:HI", help="interval for every lifting variable")
    ap.add_argument("--ball", metavar="M", type=float, help="append M - |x|^2 >= 0")
    ap.add_argument("--bounds", metavar="XJ:LO:HI", action="append",
                    help="variable bounds, repeatable")
    ap.add_argument("--scale", metavar="XJ:A:B", action="append",
                    help="substitute x_j = a*z_j + b, repeatable")
    ap.add_argument("--ranktol", type=float, help="relative singular value threshold")
    ap.add_argument("--solver", metavar="internal|external:PATH")
    ap.add_argument("--export-sdpa", metavar="DIR", help="write every relaxation as .dat-s")
    ap.add_argument("--format", choices=["table", "csv", "json"], default="table")
    ap.add_argument("--all-orders", action="store_true", default=None,
                    help="keep going after certification")
    ap.add_argument("--seed", type=int, help="seed for atom extraction")
    ap.add_argument("--match-sweep", action="store_true", default=None,
                    help="treat the order range as matching degrees of the dense hierarchy")
    ap.add_argument("--polish", action="store_true", default=None,
                    help="refine atoms with a local Newton method")
    ap.add_argument("--workers", type=int, help="orders solved concurrently")
    ap.add_argument("--shekel-data", metavar="PATH", help="build a Shekel problem from data")
    ap.add_argument("-o", "--output", metavar="FILE", help="write the report here")
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


_OVERRIDES = ("order", "sparse", "infer_cliques", "epigraph", "lift_bounds", "ball", "bounds",
              "scale", "ranktol", "solver", "export_sdpa", "all_orders", "seed", "match_sweep",
              "polish", "workers")


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.shekel_data:
            A, c = read_shekel(Path(args.shekel_data).read_text())
            pf = shekel_problem(A, c)
            name = Path(args.shekel_data).stem
            if args.sparse:
                raise ModelingError("Shekel problems couple every variable; sparse mode is refused")
        elif args.problem:
            pf = parse_problem(Path(args.problem).read_text())
            name = Path(args.problem).stem
        else:
            ap.print_usage(sys.stderr)
            print("ratgmp: error: a problem file or --shekel-data is required", file=sys.stderr)
            return EXIT_INPUT
        overrides = {k: getattr(args, k) for k in _OVERRIDES if getattr(args, k) is not None}
        report = run_hierarchy(pf, overrides, name=name)
    except (ParseError, ModelingError, OrderError, OSError) as exc:
        print(f"ratgmp: error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    text = emit_report(report, args.format)
    if args.output:
        Path(args.output).write_text(text)
    else:
        sys.stdout.write(text)
    return report.exit_code()


if __name__ == "__main__":
    sys.exit(main())
