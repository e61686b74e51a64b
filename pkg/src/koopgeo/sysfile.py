"""Reader for the line-oriented system description format.

Example::

    # damped pendulum
    vars: x1 x2
    param c = 1/10
    drift: x2, -sin(x1) - c*x2
    control: 0, 1
    observable y: x1
    box: x1 in [-1,1]; x2 in [-1,1]

``param`` values are substituted textually, as parenthesized rationals,
before any expression is parsed.
"""

from __future__ import annotations

import re
from fractions import Fraction
from pathlib import Path

from .expr import ExprError, parse_expr
from .fields import Box, ControlAffineSystem, VectorField

_IDENT = re.compile(r"[A-Za-z_][A-Za-z0-9_]*")
_BOX_ITEM = re.compile(r"^\s*([A-Za-z_][A-Za-z0-9_]*)\s+in\s+\[\s*([^,\]]+)\s*,\s*([^\]]+)\s*\]\s*$")


class SystemFileError(ValueError):
    def __init__(self, message: str, line: int | None = None):
        super().__init__(message if line is None else f"line {line}: {message}")
        self.line = line


def _strip_comment(line: str) -> str:
    return line.split("#", 1)[0].strip()


def _substitute_params(text: str, params: dict[str, str]) -> str:
    if not params:
        return text
    return _IDENT.sub(lambda m: f"({params[m.group(0)]})" if m.group(0) in params else m.group(0),
                      text)


def _parse_list(body: str, variables, params, lineno: int, count: int | None = None):
    parts = [p.strip() for p in body.split(",")]
    if count is not None and len(parts) != count:
        raise SystemFileError(f"expected {count} comma-separated expressions, got {len(parts)}",
                              lineno)
    try:
        return tuple(parse_expr(_substitute_params(p, params), variables) for p in parts)
    except ExprError as err:
        raise SystemFileError(str(err), lineno) from None


def parse_system(text: str, name: str = "") -> ControlAffineSystem:
    lines = [(i + 1, _strip_comment(raw)) for i, raw in enumerate(text.splitlines())]
    lines = [(i, ln) for i, ln in lines if ln]
    params: dict[str, str] = {}
    variables = None
    for lineno, ln in lines:
        if ln.startswith("param "):
            m = re.match(r"^param\s+([A-Za-z_][A-Za-z0-9_]*)\s*=\s*(\S+)\s*$", ln)
            if not m:
                raise SystemFileError("malformed param line", lineno)
            try:
                value = Fraction(m.group(2))
            except (ValueError, ZeroDivisionError):
                raise SystemFileError(f"param value {m.group(2)!r} is not a rational", lineno) from None
            params[m.group(1)] = str(value)
        elif ln.startswith("vars:"):
            if variables is not None:
                raise SystemFileError("duplicate vars line", lineno)
            variables = tuple(ln[5:].split())
            if not variables:
                raise SystemFileError("no variables declared", lineno)
            for v in variables:
                if not _IDENT.fullmatch(v):
                    raise SystemFileError(f"bad variable name {v!r}", lineno)
    if variables is None:
        raise SystemFileError("missing 'vars:' line")
    clash = set(params) & set(variables)
    if clash:
        raise SystemFileError(f"param shadows variable {sorted(clash)[0]!r}")
    n = len(variables)
    drift = None
    controls, observables = [], []
    box = None
    for lineno, ln in lines:
        if ln.startswith(("param ", "vars:")):
            continue
        if ln.startswith("drift:"):
            if drift is not None:
                raise SystemFileError("duplicate drift line", lineno)
            drift = VectorField(_parse_list(ln[6:], variables, params, lineno, n), variables)
        elif ln.startswith("control:"):
            controls.append(VectorField(_parse_list(ln[8:], variables, params, lineno, n),
                                        variables))
        elif ln.startswith("observable"):
            m = re.match(r"^observable\s+([A-Za-z_][A-Za-z0-9_]*)\s*:(.*)$", ln)
            if not m:
                raise SystemFileError("malformed observable line", lineno)
            (expr,) = _parse_list(m.group(2), variables, params, lineno, 1)
            observables.append((m.group(1), expr))
        elif ln.startswith("box:"):
            bounds = {v: (-1.0, 1.0) for v in variables}
            for item in ln[4:].split(";"):
                if not item.strip():
                    continue
                bm = _BOX_ITEM.match(item)
                if not bm or bm.group(1) not in bounds:
                    raise SystemFileError(f"malformed box entry {item.strip()!r}", lineno)
                try:
                    lo = float(Fraction(_eval_number(bm.group(2), params)))
                    hi = float(Fraction(_eval_number(bm.group(3), params)))
                except ValueError:
                    raise SystemFileError(f"bad interval in {item.strip()!r}", lineno) from None
                if lo > hi:
                    raise SystemFileError(f"empty interval for {bm.group(1)}", lineno)
                bounds[bm.group(1)] = (lo, hi)
            box = Box(tuple(bounds[v] for v in variables))
        else:
            raise SystemFileError(f"unrecognized line {ln!r}", lineno)
    if drift is None:
        raise SystemFileError("missing 'drift:' line")
    names = [o[0] for o in observables]
    if len(set(names)) != len(names):
        raise SystemFileError("duplicate observable name")
    return ControlAffineSystem(drift, tuple(controls), box, name, tuple(observables))


def _eval_number(text: str, params: dict[str, str]) -> str:
    text = text.strip()
    return params.get(text, text)


def load_system(path) -> ControlAffineSystem:
    path = Path(path)
    return parse_system(path.read_text(encoding="utf-8"), path.stem)
