"""Command-line front end.

Subcommands: solve, simulate, reconstruct, dump-program.  Exit codes:
0 success, 1 solver finished non-optimal, 2 config error, 3 numerical failure.
Failures print a machine-readable JSON object to stderr.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .config import ConfigError, load_config
from .invariance import NoiseMomentsMissing
from .moment import DegreeError
from .pipeline import run_dump_program, run_reconstruct, run_simulate, run_solve
from .polynomial import DegreeCapExceeded
from .reconstruct import SingularMomentMatrix
from .simulate import TrajectoryEscaped
from .solver import OPTIMAL

EXIT_OK = 0
EXIT_NON_OPTIMAL = 1
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3

_NUMERICAL_ERRORS = (
    DegreeCapExceeded,
    TrajectoryEscaped,
    SingularMomentMatrix,
    DegreeError,
    NoiseMomentsMissing,
    FloatingPointError,
)


def _emit_error(code: int, kind: str, exc: Exception) -> int:
    payload = {"error": {"code": code, "type": kind, "message": str(exc)}}
    key = getattr(exc, "key", None)
    if key is not None:
        payload["error"]["key"] = key
    print(json.dumps(payload, sort_keys=True), file=sys.stderr)
    return code


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="invmeasure",
        description=(
            "Compute invariant measures and Perron-Frobenius eigenmeasures of "
            "polynomial systems via moment relaxations."
        ),
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", required=True, help="path to the JSON run config")
        p.add_argument("--out", default=None, help="output directory (defaults to config output_dir)")
        p.add_argument("--verbose", action="store_true")

    p_solve = sub.add_parser("solve", help="assemble and solve the relaxation")
    common(p_solve)
    p_solve.add_argument(
        "--dump-program", action="store_true", help="also write program.txt"
    )

    p_sim = sub.add_parser("simulate", help="estimate moments from a trajectory")
    common(p_sim)

    p_rec = sub.add_parser("reconstruct", help="density and support artifacts from moments")
    common(p_rec)
    p_rec.add_argument("--moments", required=True, help="moments file from solve or simulate")

    p_dump = sub.add_parser("dump-program", help="write the assembled program as text")
    common(p_dump)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        rc = load_config(args.config)
    except ConfigError as exc:
        return _emit_error(EXIT_CONFIG, "config", exc)
    outdir = Path(args.out) if args.out else Path(rc.output_dir)

    try:
        if args.command == "solve":
            result, path = run_solve(rc, outdir)
            if args.dump_program:
                run_dump_program(rc, outdir)
            if args.verbose:
                print(
                    f"status={result.status} iterations={result.iterations} "
                    f"objective={result.objective_value:.6g} -> {path}",
                    file=sys.stderr,
                )
            if result.status != OPTIMAL:
                print(
                    json.dumps(
                        {
                            "error": {
                                "code": EXIT_NON_OPTIMAL,
                                "type": "solver",
                                "message": f"solver finished with status {result.status}",
                            }
                        },
                        sort_keys=True,
                    ),
                    file=sys.stderr,
                )
                return EXIT_NON_OPTIMAL
            return EXIT_OK
        if args.command == "simulate":
            path = run_simulate(rc, outdir)
            if args.verbose:
                print(f"wrote {path}", file=sys.stderr)
            return EXIT_OK
        if args.command == "reconstruct":
            written = run_reconstruct(rc, Path(args.moments), outdir)
            if args.verbose:
                for p in written:
                    print(f"wrote {p}", file=sys.stderr)
            return EXIT_OK
        path = run_dump_program(rc, outdir)
        if args.verbose:
            print(f"wrote {path}", file=sys.stderr)
        return EXIT_OK
    except ConfigError as exc:
        return _emit_error(EXIT_CONFIG, "config", exc)
    except _NUMERICAL_ERRORS as exc:
        return _emit_error(EXIT_NUMERICAL, "numerical", exc)
    except (ValueError, ArithmeticError, OSError) as exc:
        return _emit_error(EXIT_NUMERICAL, "numerical", exc)


if __name__ == "__main__":
    sys.exit(main())
