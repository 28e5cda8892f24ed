"""Command-line interface.

Exit codes: 0 on success, 2 for invalid parameters, 3 when a numerical
procedure fails to converge (raise ``--digits`` or ``--mesh``).
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from . import harness
from . import laplace_svd as ls
from . import numerics as nm
from . import scheme as sc
from . import targets as tg
from .errors import ConvergenceError, ParameterError

EXIT_OK = 0
EXIT_PARAMETER = 2
EXIT_CONVERGENCE = 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise ParameterError(message)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="singpow", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"singpow {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    pre = sub.add_parser("precompute", help="build a scheme (powers and collocation points) and write it as JSON")
    pre.add_argument("--a", type=float, required=True)
    pre.add_argument("--b", type=float, required=True)
    pre.add_argument("--eps", type=float, default=sc.EPS0)
    pre.add_argument("--digits", type=int, default=nm.DEFAULT_DIGITS)
    pre.add_argument("--mesh", type=int, default=None, help="Nystrom mesh size M (default max(200, 8 n_max))")
    pre.add_argument("--theorem-rule", action="store_true", help="use N = 2n powers instead of N = n")
    pre.add_argument("--out", required=True)

    fit = sub.add_parser("fit", help="fit a named target with a precomputed scheme")
    fit.add_argument("--scheme", required=True)
    fit.add_argument("--target", required=True, choices=tg.TARGET_IDS)
    fit.add_argument("--c", type=float, default=None, help="point-mass location (sigma5/sigma6)")
    fit.add_argument("--k", type=int, default=None, help="derivative order (sigma6)")
    fit.add_argument("--arc-alpha", type=float, default=None)
    fit.add_argument("--eps", type=float, default=sc.EPS0, help="TSVD threshold")
    fit.add_argument("--allow-outside", action="store_true", help="permit c outside [a, b]")
    fit.add_argument("--out", required=True)

    ev = sub.add_parser("eval", help="evaluate a fitted expansion")
    ev.add_argument("--fit", required=True)
    ev.add_argument("--x", type=float, required=True, action="append", help="point in [0, 1]; repeatable")

    ex = sub.add_parser("experiment", help="run an experiment family and write its table")
    ex.add_argument("--name", required=True, choices=harness.EXPERIMENTS)
    ex.add_argument("--gamma", type=float, action="append", default=None)
    ex.add_argument("--target", action="append", default=None, choices=tg.TARGET_IDS)
    ex.add_argument("--n-min", type=int, default=None)
    ex.add_argument("--n-max", type=int, default=None)
    ex.add_argument("--arc-alpha", type=float, action="append", default=None)
    ex.add_argument("--c-count", type=int, default=None)
    ex.add_argument("--full", action="store_true", help="1000-point c sweeps")
    ex.add_argument("--digits", type=int, default=harness.DEFAULT_DIGITS)
    ex.add_argument("--mesh", type=int, default=harness.DEFAULT_MESH)
    ex.add_argument("--format", choices=("csv", "json"), default="csv")
    ex.add_argument("--cache-dir", default=None, help=f"overrides ${harness.CACHE_ENV}")
    ex.add_argument("--out", required=True)
    return p


def _precompute(args) -> int:
    band = ls.Band(args.a, args.b)
    scheme = sc.build_scheme(band, args.eps, args.digits, args.mesh, args.theorem_rule)
    sc.save_scheme(scheme, args.out)
    print(f"N = {scheme.size}")
    print(f"alpha_N = {scheme.alpha_n!r}")
    return EXIT_OK


def _fit(args) -> int:
    scheme = sc.load_scheme(args.scheme)
    measure = tg.named_measure(args.target, scheme.band, c=args.c, k=args.k, allow_outside=args.allow_outside)
    arc = None if args.arc_alpha is None else sc.Arc(args.arc_alpha)
    result = sc.fit_measure(scheme, measure, args.eps, arc)
    Path(args.out).write_text(json.dumps(sc.fit_to_dict(result), indent=1) + "\n")
    print(f"k = {result.report.k}")
    print(f"residual = {result.residual!r}")
    return EXIT_OK


def _eval(args) -> int:
    try:
        data = json.loads(Path(args.fit).read_text())
    except json.JSONDecodeError as exc:
        raise ParameterError(f"{args.fit}: not a JSON fit file ({exc})") from exc
    result = sc.fit_from_dict(data)
    for x in args.x:
        v = sc.evaluate(result, x)
        if np.iscomplexobj(v):
            print(f"{x!r} {float(v.real)!r} {float(v.imag)!r}")
        else:
            print(f"{x!r} {float(v)!r}")
    return EXIT_OK


def _experiment(args) -> int:
    n_range = None
    if args.n_min is not None or args.n_max is not None:
        n_range = (args.n_min if args.n_min is not None else 1, args.n_max if args.n_max is not None else 10**6)
    spec = harness.ExperimentSpec(
        name=args.name,
        gammas=tuple(args.gamma) if args.gamma else harness.DEFAULT_GAMMAS,
        targets=tuple(args.target) if args.target else None,
        n_range=n_range,
        arc_alphas=tuple(args.arc_alpha) if args.arc_alpha else None,
        c_count=args.c_count,
        full=args.full,
        output=args.out,
        fmt=args.format,
        digits=args.digits,
        mesh_size=args.mesh,
    )
    ws = harness.Workspace(args.cache_dir, spec.digits, spec.mesh_size, spec.eps)
    table = harness.run_experiment(spec, ws)
    harness.export(table, spec.fmt, args.out)
    print(f"{len(table.rows)} rows -> {args.out}")
    return EXIT_OK


_COMMANDS = {"precompute": _precompute, "fit": _fit, "eval": _eval, "experiment": _experiment}


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        return _COMMANDS[args.command](args)
    except ParameterError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARAMETER
    except ConvergenceError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        print("hint: increase --digits or --mesh", file=sys.stderr)
        return EXIT_CONVERGENCE
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_PARAMETER


if __name__ == "__main__":
    sys.exit(main())
