"""Command line harness: ``run``, ``sweep`` and ``compare``.

Single runs and comparisons print JSON, sweeps print CSV. Errors are
reported as a JSON object on stderr with a nonzero exit code.
"""
from __future__ import annotations

import argparse
import json
import os
import sys

from .assembly import SCHEMES
from .bench import RunConfig, compare, rows_to_csv, run_case, sweep


def _vector(text: str) -> tuple:
    try:
        return tuple(float(v) for v in text.split(","))
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma separated numbers, got {text!r}") from exc


def _int_list(text: str) -> list:
    try:
        out = [int(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma separated integers, got {text!r}") from exc
    return out


def _common(sp: argparse.ArgumentParser, with_scheme: bool = True) -> None:
    sp.add_argument("--dim", type=int, default=3, choices=(2, 3))
    if with_scheme:
        sp.add_argument("--scheme", default="dwq", choices=SCHEMES)
    sp.add_argument("--plane-point", type=_vector, default=None, metavar="X,Y[,Z]")
    sp.add_argument("--plane-normal", type=_vector, default=None, metavar="X,Y[,Z]")
    sp.add_argument("--target", default="paper", help="paper, constant or poly:<deg>")
    sp.add_argument("--cut-quad-order", type=int, default=None)
    sp.add_argument("--out", default=None, help="write the report here instead of stdout")
    sp.add_argument("--repeat", type=int, default=1, help="report the minimum time over k runs")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cutspline", description="Mass matrix formation on cut B-spline meshes.")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="single projection run (JSON)")
    run.add_argument("--p", type=int, required=True)
    run.add_argument("--h", type=int, required=True)
    run.add_argument("--export-matrix", default=None, metavar="PATH")
    _common(run)

    sw = sub.add_parser("sweep", help="convergence and timing sweep (CSV)")
    sw.add_argument("--p", type=_int_list, required=True, metavar="P1,P2,...")
    sw.add_argument("--h", type=_int_list, required=True, metavar="H1,H2,...")
    _common(sw)

    cmp_ = sub.add_parser("compare", help="all three schemes side by side (JSON)")
    cmp_.add_argument("--p", type=int, required=True)
    cmp_.add_argument("--h", type=int, required=True)
    _common(cmp_, with_scheme=False)
    return parser


def _config_kwargs(args) -> dict:
    return dict(dim=args.dim, plane_point=args.plane_point, plane_normal=args.plane_normal,
                target=args.target, cut_quad_order=args.cut_quad_order, repeat=args.repeat)


def _emit(text: str, out: str | None) -> None:
    if out:
        with open(out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    threads = os.environ.get("CUTSPLINE_THREADS", "1")
    try:
        if threads != "1":
            raise ValueError("CUTSPLINE_THREADS is reserved; only single-threaded execution (1) is supported")
        if args.command == "run":
            cfg = RunConfig(p=args.p, h=args.h, scheme=args.scheme, export_matrix=args.export_matrix,
                            **_config_kwargs(args))
            report = run_case(cfg).report.to_dict()
            _emit(json.dumps(report, indent=2) + "\n", args.out)
        elif args.command == "sweep":
            if not args.p or not args.h:
                raise ValueError("p and h lists must be nonempty")
            rows = sweep(args.p, args.h, args.scheme, **_config_kwargs(args))
            _emit(rows_to_csv(rows), args.out)
        else:
            report = compare(args.p, args.h, **_config_kwargs(args))
            _emit(json.dumps(report, indent=2) + "\n", args.out)
    except Exception as exc:
        json.dump({"error": type(exc).__name__, "message": str(exc)}, sys.stderr)
        sys.stderr.write("\n")
        return 2 if isinstance(exc, ValueError) else 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
