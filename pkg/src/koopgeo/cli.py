"""Command-line front end: ``koopgeo analyze|lift|linearize FILE``.

Exit codes: 0 success, 1 error, 2 rank-deficient (analyze), 3 relative
degree undefined or degree sum != n (linearize), 4 verification deviation
above ``--tol`` (linearize).
"""

from __future__ import annotations

import argparse
import sys
import warnings
from pathlib import Path
from typing import Sequence

import numpy as np

from .controllability import DEFAULT_SAMPLES, RANK_RTOL, controllability_verdict
from .expr import ExprError, parse_expr, to_string
from .feedback import (
    FeedbackLaw,
    LinearizationError,
    brunovsky_realization,
    independence_check,
    relative_degree,
    verify_linearization,
)
from .lift import LiftError, bilinearize, build_monomial_dictionary, compare_lift
from .numerics import ControlSignal, IntegrationError
from .sysfile import SystemFileError, load_system

EXIT_OK, EXIT_ERROR, EXIT_DEFICIENT, EXIT_DEGREE, EXIT_DEVIATION = 0, 1, 2, 3, 4


class UsageError(ValueError):
    pass


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def parse_vector(text: str) -> np.ndarray:
    text = text.strip().strip("()[]")
    try:
        return np.array([float(v) for v in text.split(",") if v.strip()])
    except ValueError:
        raise UsageError(f"bad vector {text!r}") from None


def parse_run_spec(text: str, signal_key: str) -> dict:
    """Parse ``"u=<expr>[,<expr>];x0=<vec>;T=<real>"`` (``v=`` for --verify)."""
    out = {}
    for part in text.split(";"):
        if not part.strip():
            continue
        if "=" not in part:
            raise UsageError(f"expected key=value in {part!r}")
        key, value = (s.strip() for s in part.split("=", 1))
        out[key] = value
    missing = {signal_key, "x0", "T"} - out.keys()
    if missing:
        raise UsageError(f"run description is missing {', '.join(sorted(missing))}")
    try:
        signal = ControlSignal.from_exprs([p.strip() for p in out[signal_key].split(",")])
        T = float(out["T"])
    except (ExprError, ValueError) as err:
        raise UsageError(str(err)) from None
    return {"signal": signal, "x0": parse_vector(out["x0"]), "T": T}


def _header(cmd: str, args, **extra) -> str:
    items = [f"file={Path(args.file).name}", f"seed={args.seed}", f"tol={args.tol!r}"]
    items += [f"{k}={v}" for k, v in extra.items()]
    return f"# koopgeo {cmd} " + " ".join(items)


def cmd_analyze(args, out) -> int:
    sysm = load_system(args.file)
    points = [parse_vector(p) for p in args.points.split(";")] if args.points else []
    for p in points:
        if p.shape != (sysm.n,):
            raise UsageError(f"point {p} does not have dimension {sysm.n}")
    depth = args.depth if args.depth is not None else 2 * sysm.n + 1
    report = controllability_verdict(sysm, points, depth, args.samples, args.seed)
    print(_header("analyze", args, depth=depth, samples=args.samples, rtol=RANK_RTOL,
                  box=repr(sysm.box.describe(sysm.variables))), file=out)
    print(report.render(), file=out)
    if not report.basis.saturated:
        print(f"warning: bracket depth cap {depth} reached without saturation", file=sys.stderr)
    return EXIT_OK if report.controllable else EXIT_DEFICIENT


def cmd_lift(args, out) -> int:
    sysm = load_system(args.file)
    if args.degree < 0:
        raise UsageError("--degree must be >= 0")
    dictionary = build_monomial_dictionary(sysm.n, args.degree, sysm.variables)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        lifted = bilinearize(sysm, dictionary, seed=args.seed)
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    if lifted.projected:
        print("notice: non-polynomial field, generators projected by least squares",
              file=sys.stderr)
    print(_header("lift", args, degree=args.degree, K=len(dictionary),
                  box=repr(lifted.box.describe(sysm.variables))), file=out)
    print("# dictionary: " + ", ".join(to_string(p) for p in dictionary), file=out)
    print(f"# exact: {'yes' if lifted.exact else 'no'}", file=out)
    out.write(lifted.export())
    kind = "rms fit" if lifted.projected else "sup over box"
    labels = ["A"] + [f"N{i + 1}" for i in range(lifted.m)]
    print(f"# residuals ({kind}): observable " + " ".join(labels), file=out)
    for k, psi in enumerate(dictionary):
        vals = " ".join(_fmt(r) for r in lifted.residuals[:, k])
        print(f"# {to_string(psi)} {vals}", file=out)
    if args.simulate:
        spec = parse_run_spec(args.simulate, "u")
        if spec["signal"].m != sysm.m:
            raise UsageError(f"u needs {sysm.m} channel(s)")
        if spec["x0"].shape != (sysm.n,):
            raise UsageError(f"x0 must have dimension {sysm.n}")
        comp = compare_lift(sysm, dictionary, spec["signal"], spec["x0"], spec["T"], args.tol,
                            lifted)
        K = len(dictionary)
        header = ["t"] + [f"psi_{k}" for k in range(K)] + [f"z_{k}" for k in range(K)] + ["error"]
        rows = [",".join(header)]
        for t, psi, z, e in zip(comp.times, comp.true_psi, comp.lifted_z, comp.errors):
            rows.append(",".join(_fmt(x) for x in (t, *psi, *z, e)))
        csv = "\n".join(rows) + "\n"
        if args.csv:
            Path(args.csv).write_text(csv, encoding="utf-8", newline="\n")
        else:
            out.write("\n")
            out.write(csv)
        print(f"# lift error (sup over t): {_fmt(comp.sup_error)}",
              file=sys.stderr if not args.csv else out)
    return EXIT_OK


def cmd_linearize(args, out) -> int:
    sysm = load_system(args.file)
    if args.outputs:
        names = [s.strip() for s in args.outputs.split(",") if s.strip()]
    else:
        names = [name for name, _ in sysm.observables]
    if not names:
        raise UsageError("no outputs: declare observables in the file or pass --outputs")
    try:
        h = tuple(sysm.observable(nm) for nm in names)
    except KeyError as err:
        raise UsageError(str(err.args[0])) from None
    p = parse_vector(args.point) if args.point else sysm.box.center
    if p.shape != (sysm.n,):
        raise UsageError(f"point must have dimension {sysm.n}")
    report = relative_degree(sysm, h, p, args.cap, seed=args.seed)
    print(_header("linearize", args, outputs=",".join(names), cap=report.cap), file=out)
    print(report.render(), file=out)
    real = brunovsky_realization(sysm, h, report)
    points = np.vstack([p[None, :], sysm.box.sample(args.samples, args.seed)])
    prof = independence_check(sysm, h, report.degrees, points)
    print(f"independence: ranks min={min(prof.ranks)} max={max(prof.ranks)} over "
          f"{len(prof.ranks)} points ({'ok' if prof.passed else 'FAILED'})", file=out)
    for bad in prof.failures:
        print("  rank deficient at (" + ",".join(_fmt(x) for x in bad) + ")", file=out)
    print(real.render(), file=out)
    law = FeedbackLaw(sysm, h, report)
    if law.symbolic is not None:
        print(f"feedback: u = {to_string(law.symbolic[0])}", file=out)
    else:
        print("feedback: u = pinv(R(x)) (v - b(x)) with b = (" +
              ", ".join(to_string(b) for b in law.b) + ")", file=out)
    if not prof.passed:
        return EXIT_DEGREE
    if args.verify:
        spec = parse_run_spec(args.verify, "v")
        if spec["signal"].m != len(h):
            raise UsageError(f"v needs {len(h)} channel(s)")
        if spec["x0"].shape != (sysm.n,):
            raise UsageError(f"x0 must have dimension {sysm.n}")
        check = verify_linearization(sysm, h, report, spec["signal"], spec["x0"], spec["T"],
                                     args.tol * 1e-3)
        print(f"deviation: {_fmt(check.deviation)} (threshold {args.tol!r}, "
              f"integrator tol {args.tol * 1e-3!r})", file=out)
        if not check.deviation < args.tol:
            return EXIT_DEVIATION
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="koopgeo", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, tol):
        p.add_argument("file", help="system description file")
        p.add_argument("--seed", type=int, default=0, help="quasi-random sampling seed")
        p.add_argument("--tol", type=float, default=tol)

    p = sub.add_parser("analyze", help="Lie algebra rank condition report")
    common(p, 1e-9)
    p.add_argument("--depth", type=int, help="maximal bracket depth (default 2n+1)")
    p.add_argument("--points", help="extra sample points, e.g. '0,0;1,0.5'")
    p.add_argument("--samples", type=int, default=DEFAULT_SAMPLES,
                   help="number of Halton points in the box")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("lift", help="bilinear Koopman lift on monomials")
    common(p, 1e-9)
    p.add_argument("--degree", type=int, required=True)
    p.add_argument("--simulate", help="'u=<expr>;x0=<vec>;T=<real>'")
    p.add_argument("--csv", help="write the simulation CSV here instead of stdout")
    p.set_defaults(func=cmd_lift)

    p = sub.add_parser("linearize", help="relative degree and Brunovsky form")
    common(p, 1e-6)
    p.add_argument("--outputs", help="comma-separated observable names")
    p.add_argument("--point", help="evaluation point p (default: box center)")
    p.add_argument("--verify", help="'v=<expr>;x0=<vec>;T=<real>'")
    p.add_argument("--cap", type=int, help="relative degree cap (default 2n)")
    p.add_argument("--samples", type=int, default=DEFAULT_SAMPLES)
    p.set_defaults(func=cmd_linearize)
    return parser


def main(argv: Sequence[str] | None = None, out=None) -> int:
    out = out or sys.stdout
    args = build_parser().parse_args(argv)
    try:
        return args.func(args, out)
    except LinearizationError as err:
        print(f"error: {err}", file=sys.stderr)
        return err.exit_code
    except (SystemFileError, UsageError, ExprError, LiftError, IntegrationError, OSError,
            ValueError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
