"""Immutable symbolic expressions over named real variables.

Every constructor in this module returns the canonical form of its result:
sums and products are flattened, like terms are collected, rational
constants are folded, and products are distributed over sums so that two
polynomials are equal exactly when their trees are equal.  Constants are
``fractions.Fraction`` values; no floating-point number ever enters a tree.
"""

from __future__ import annotations

import math
import re
from fractions import Fraction
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

FUNCTIONS = ("exp", "log", "sin", "cos")


class ExprError(Exception):
    """Base class for expression errors."""


class ExprSyntaxError(ExprError):
    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} at byte offset {offset}")
        self.offset = offset


class UnknownIdentifierError(ExprError):
    def __init__(self, name: str, offset: int | None = None):
        where = "" if offset is None else f" at byte offset {offset}"
        super().__init__(f"unknown identifier {name!r}{where}")
        self.name = name
        self.offset = offset


class UnboundVariableError(ExprError):
    def __init__(self, name: str):
        super().__init__(f"variable {name!r} is not bound")
        self.name = name


class EvalDomainError(ExprError, ArithmeticError):
    """Raised when evaluation leaves the real domain (log of x <= 0, 1/0)."""


class Expr:
    """A node of a canonical expression tree.

    ``kind`` is one of ``const``, ``var``, ``add``, ``mul``, ``pow``,
    ``exp``, ``log``, ``sin`` or ``cos``.  For ``const`` the payload is a
    Fraction, for ``var`` the variable name and for ``pow`` the integer
    exponent (the base is ``args[0]``).

    Instances should be built through :func:`const`, :func:`var`,
    :func:`add`, :func:`mul`, :func:`power`, :func:`func` or
    :func:`parse_expr`, never directly.
    """

    __slots__ = ("kind", "args", "value", "_hash", "_key")

    def __init__(self, kind: str, args: tuple = (), value=None):
        self.kind = kind
        self.args = args
        self.value = value
        self._hash = hash((kind, args, value))
        self._key = None

    def __eq__(self, other):
        if self is other:
            return True
        if not isinstance(other, Expr):
            return NotImplemented
        return (
            self._hash == other._hash
            and self.kind == other.kind
            and self.value == other.value
            and self.args == other.args
        )

    def __hash__(self):
        return self._hash

    def __setattr__(self, name, val):
        if name != "_key" and hasattr(self, "_hash"):
            raise AttributeError("Expr is immutable")
        object.__setattr__(self, name, val)

    def __repr__(self):
        return f"Expr({to_string(self)!r})"

    def __str__(self):
        return to_string(self)

    # Arithmetic sugar; ints and Fractions are promoted to constants.
    def __add__(self, other):
        return add(self, _coerce(other))

    __radd__ = __add__

    def __sub__(self, other):
        return add(self, neg(_coerce(other)))

    def __rsub__(self, other):
        return add(_coerce(other), neg(self))

    def __mul__(self, other):
        return mul(self, _coerce(other))

    __rmul__ = __mul__

    def __truediv__(self, other):
        return mul(self, power(_coerce(other), -1))

    def __rtruediv__(self, other):
        return mul(_coerce(other), power(self, -1))

    def __neg__(self):
        return neg(self)

    def __pow__(self, k):
        if not isinstance(k, int):
            raise TypeError("only integer exponents are supported")
        return power(self, k)

    @property
    def is_const(self) -> bool:
        return self.kind == "const"

    @property
    def is_zero(self) -> bool:
        return self.kind == "const" and self.value == 0

    def free_variables(self) -> frozenset[str]:
        if self.kind == "var":
            return frozenset((self.value,))
        out: frozenset[str] = frozenset()
        for a in self.args:
            out |= a.free_variables()
        return out


def _coerce(x) -> Expr:
    if isinstance(x, Expr):
        return x
    if isinstance(x, (int, Fraction)):
        return const(x)
    raise TypeError(f"cannot use {type(x).__name__} in a symbolic expression")


# ---------------------------------------------------------------------------
# canonical constructors

ZERO = Expr("const", (), Fraction(0))
ONE = Expr("const", (), Fraction(1))


def const(q) -> Expr:
    q = Fraction(q)
    if q == 0:
        return ZERO
    if q == 1:
        return ONE
    return Expr("const", (), q)


def var(name: str) -> Expr:
    return Expr("var", (), name)


def order_key(e: Expr):
    """Fixed total order used to sort sum terms and product factors."""
    if e._key is not None:
        return e._key
    k = e.kind
    if k == "const":
        key = (0, e.value)
    elif k == "var":
        key = (1, e.value)
    elif k in FUNCTIONS:
        key = (2, k, order_key(e.args[0]))
    elif k == "pow":
        key = (3, order_key(e.args[0]), e.value)
    elif k == "mul":
        key = (4, tuple(_factor_key(a) for a in e.args))
    else:
        key = (5, tuple(order_key(a) for a in e.args))
    e._key = key
    return key


def _factor_key(f: Expr):
    if f.kind == "pow":
        return (order_key(f.args[0]), f.value)
    return (order_key(f), 1)


def _degree(mono: Expr) -> int:
    factors = mono.args if mono.kind == "mul" else (mono,)
    d = 0
    for f in factors:
        if f.kind == "var":
            d += 1
        elif f.kind == "pow" and f.args[0].kind == "var":
            d += f.value
    return d


def _term_key(t: Expr):
    mono = _split_coeff(t)[1]
    return (_degree(mono), order_key(mono))


def _split_coeff(e: Expr) -> tuple[Fraction, Expr]:
    """Return (coefficient, monomial part) of a sum term."""
    if e.kind == "const":
        return e.value, ONE
    if e.kind == "mul" and e.args[0].kind == "const":
        rest = e.args[1:]
        return e.args[0].value, rest[0] if len(rest) == 1 else Expr("mul", rest)
    return Fraction(1), e


def _make_term(c: Fraction, mono: Expr) -> Expr:
    if mono is ONE or mono == ONE:
        return const(c)
    if c == 1:
        return mono
    if mono.kind == "mul":
        return Expr("mul", (const(c),) + mono.args)
    return Expr("mul", (const(c), mono))


def _pythagoras(terms: dict[Expr, Fraction]) -> None:
    # c*M*sin(a)^2 + c*M*cos(a)^2 -> c*M, exact pattern only
    changed = True
    while changed:
        changed = False
        for mono, c in list(terms.items()):
            if mono not in terms:
                continue
            factors = mono.args if mono.kind == "mul" else (mono,)
            for i, fac in enumerate(factors):
                if fac.kind == "pow" and fac.value == 2 and fac.args[0].kind == "sin":
                    other = Expr("pow", (func("cos", fac.args[0].args[0]),), 2)
                    rest = factors[:i] + factors[i + 1:]
                    partner = _product_of(rest + (other,))
                    if terms.get(partner) == c:
                        del terms[mono]
                        del terms[partner]
                        base = _product_of(rest)
                        terms[base] = terms.get(base, Fraction(0)) + c
                        if terms[base] == 0:
                            del terms[base]
                        changed = True
                    break
            if changed:
                break


def _product_of(factors: Sequence[Expr]) -> Expr:
    if not factors:
        return ONE
    if len(factors) == 1:
        return factors[0]
    return Expr("mul", tuple(sorted(factors, key=_factor_key)))


def add(*xs) -> Expr:
    terms: dict[Expr, Fraction] = {}
    stack = [_coerce(x) for x in xs]
    while stack:
        e = stack.pop()
        if e.kind == "add":
            stack.extend(e.args)
            continue
        c, mono = _split_coeff(e)
        if c == 0:
            continue
        terms[mono] = terms.get(mono, Fraction(0)) + c
    terms = {m: c for m, c in terms.items() if c != 0}
    if len(terms) > 1:
        _pythagoras(terms)
    if not terms:
        return ZERO
    out = [_make_term(c, m) for m, c in terms.items()]
    if len(out) == 1:
        return out[0]
    out.sort(key=_term_key)
    return Expr("add", tuple(out))


def neg(e: Expr) -> Expr:
    return mul(const(-1), e)


def mul(*xs) -> Expr:
    coeff = Fraction(1)
    powers: dict[Expr, int] = {}
    exp_arg: list[Expr] = []
    stack = [(_coerce(x), 1) for x in xs]
    while stack:
        e, k = stack.pop()
        if e.kind == "const":
            coeff *= e.value ** k
        elif e.kind == "mul":
            stack.extend((a, k) for a in e.args)
        elif e.kind == "pow":
            stack.append((e.args[0], e.value * k))
        elif e.kind == "exp":
            exp_arg.append(mul(k, e.args[0]) if k != 1 else e.args[0])
        else:
            powers[e] = powers.get(e, 0) + k
    if coeff == 0:
        return ZERO
    if exp_arg:
        ea = add(*exp_arg)
        if not ea.is_zero:
            powers[Expr("exp", (ea,))] = 1
    factors = []
    sums = []
    for base, k in powers.items():
        if k == 0:
            continue
        if base.kind == "add" and k > 0:
            sums.extend([base] * k)
        else:
            factors.append(base if k == 1 else Expr("pow", (base,), k))
    if sums:
        # distribute the remaining product over every positive sum factor
        acc = [_make_term(coeff, _product_of(factors))]
        for s in sums:
            acc = _terms(add(*[mul(t, u) for t in acc for u in s.args]))
        return add(*acc)
    return _make_term(coeff, _product_of(factors))


def _terms(e: Expr) -> list[Expr]:
    return list(e.args) if e.kind == "add" else [e]


def power(base: Expr, k: int) -> Expr:
    base = _coerce(base)
    if not isinstance(k, int):
        raise TypeError("exponent must be an integer")
    if k == 0:
        return ONE
    if k == 1:
        return base
    if base.kind == "const":
        if base.value == 0 and k < 0:
            raise EvalDomainError("division by zero")
        return const(base.value ** k)
    if base.kind in ("mul", "pow", "exp") or (base.kind == "add" and k > 0):
        return mul(*([base] * k)) if k > 0 else _inverse_power(base, k)
    return Expr("pow", (base,), k)


def _inverse_power(base: Expr, k: int) -> Expr:
    if base.kind == "pow":
        return power(base.args[0], base.value * k)
    if base.kind == "exp":
        return func("exp", mul(k, base.args[0]))
    if base.kind == "mul":
        return mul(*[power(a, k) for a in base.args])
    return Expr("pow", (base,), k)


def func(name: str, arg) -> Expr:
    arg = _coerce(arg)
    if name not in FUNCTIONS:
        raise ExprError(f"unknown function {name!r}")
    if arg.is_zero:
        if name == "exp" or name == "cos":
            return ONE
        if name == "sin":
            return ZERO
        raise EvalDomainError("log of zero")
    if name == "log":
        if arg == ONE:
            return ZERO
        if arg.kind == "exp":
            return arg.args[0]
        if arg.kind == "const" and arg.value < 0:
            raise EvalDomainError("log of a negative constant")
    return Expr(name, (arg,))


def exp(a) -> Expr:
    return func("exp", a)


def log(a) -> Expr:
    return func("log", a)


def sin(a) -> Expr:
    return func("sin", a)


def cos(a) -> Expr:
    return func("cos", a)


def substitute(e: Expr, mapping: Mapping[str, Expr]) -> Expr:
    """Replace variables by expressions and re-canonicalize."""
    k = e.kind
    if k == "const":
        return e
    if k == "var":
        return _coerce(mapping[e.value]) if e.value in mapping else e
    args = [substitute(a, mapping) for a in e.args]
    if k == "add":
        return add(*args)
    if k == "mul":
        return mul(*args)
    if k == "pow":
        return power(args[0], e.value)
    return func(k, args[0])


# ---------------------------------------------------------------------------
# calculus and evaluation


def diff(e: Expr, x: str) -> Expr:
    """Exact partial derivative of ``e`` with respect to variable ``x``."""
    k = e.kind
    if k == "const":
        return ZERO
    if k == "var":
        return ONE if e.value == x else ZERO
    if x not in e.free_variables():
        return ZERO
    if k == "add":
        return add(*[diff(a, x) for a in e.args])
    if k == "mul":
        terms = []
        for i, a in enumerate(e.args):
            da = diff(a, x)
            if not da.is_zero:
                terms.append(mul(da, *e.args[:i], *e.args[i + 1:]))
        return add(*terms)
    a = e.args[0]
    da = diff(a, x)
    if k == "pow":
        return mul(e.value, power(a, e.value - 1), da)
    if k == "exp":
        return mul(e, da)
    if k == "log":
        return mul(da, power(a, -1))
    if k == "sin":
        return mul(cos(a), da)
    return mul(-1, sin(a), da)


def evaluate(e: Expr, point: Mapping[str, float]) -> float:
    """Recursive floating-point evaluation of ``e`` at ``point``."""
    k = e.kind
    if k == "const":
        return float(e.value)
    if k == "var":
        try:
            return float(point[e.value])
        except KeyError:
            raise UnboundVariableError(e.value) from None
    if k == "add":
        return math.fsum(evaluate(a, point) for a in e.args)
    if k == "mul":
        out = 1.0
        for a in e.args:
            out *= evaluate(a, point)
        return out
    a = evaluate(e.args[0], point)
    if k == "pow":
        if a == 0.0 and e.value < 0:
            raise EvalDomainError("division by zero")
        return a ** e.value
    if k == "exp":
        return math.exp(a)
    if k == "log":
        if a <= 0.0:
            raise EvalDomainError(f"log of nonpositive value {a!r}")
        return math.log(a)
    if k == "sin":
        return math.sin(a)
    return math.cos(a)


def _source(e: Expr, index: Mapping[str, int]) -> str:
    k = e.kind
    if k == "const":
        return repr(float(e.value))
    if k == "var":
        return f"x[{index[e.value]}]"
    if k == "add":
        return "(" + " + ".join(_source(a, index) for a in e.args) + ")"
    if k == "mul":
        return "(" + "*".join(_source(a, index) for a in e.args) + ")"
    if k == "pow":
        return f"({_source(e.args[0], index)})**{e.value}"
    return f"_{k}({_source(e.args[0], index)})"


def _checked_log(a):
    if a <= 0.0:
        raise EvalDomainError(f"log of nonpositive value {a!r}")
    return math.log(a)


def lambdify(exprs: Sequence[Expr], variables: Sequence[str], vectorized: bool = False) -> Callable:
    """Compile expressions into a fast callable ``fn(x) -> ndarray``.

    ``x`` is indexed positionally in ``variables`` order.  With
    ``vectorized=True`` each ``x[i]`` may be a numpy array and numpy ufuncs
    are used; otherwise math-module scalars are used and domain errors are
    raised as :class:`EvalDomainError`.
    """
    index = {v: i for i, v in enumerate(variables)}
    for e in exprs:
        missing = e.free_variables() - index.keys()
        if missing:
            raise UnboundVariableError(sorted(missing)[0])
    body = ", ".join(_source(e, index) for e in exprs)
    if vectorized:
        ns = {"_exp": np.exp, "_log": np.log, "_sin": np.sin, "_cos": np.cos, "_np": np}
        raw = eval(f"lambda x: ({body}{',' if len(exprs) == 1 else ''})", ns)  # noqa: S307

        def fn(x):
            x = [np.asarray(c, dtype=float) for c in x]
            shape = np.broadcast(*x).shape if x else ()
            with np.errstate(all="ignore"):
                cols = raw(x) if exprs else ()
            return np.array([np.broadcast_to(c, shape) for c in cols], dtype=float)

        return fn
    ns = {"_exp": math.exp, "_log": _checked_log, "_sin": math.sin, "_cos": math.cos, "_np": np}
    raw = eval(f"lambda x: ({body}{',' if len(exprs) == 1 else ''})", ns)  # noqa: S307

    def fn(x):
        try:
            return np.array(raw(x), dtype=float)
        except ZeroDivisionError as err:
            raise EvalDomainError("division by zero") from err
        except OverflowError as err:
            raise EvalDomainError(str(err)) from err

    return fn


# ---------------------------------------------------------------------------
# polynomial view


def as_polynomial(e: Expr, variables: Sequence[str]) -> dict[tuple[int, ...], Fraction] | None:
    """Exponent-tuple -> coefficient map, or ``None`` if ``e`` is not a polynomial."""
    n = len(variables)
    index = {v: i for i, v in enumerate(variables)}
    out: dict[tuple[int, ...], Fraction] = {}
    for term in _terms(e):
        c, mono = _split_coeff(term)
        expo = [0] * n
        factors = () if mono == ONE else (mono.args if mono.kind == "mul" else (mono,))
        for f in factors:
            if f.kind == "var":
                base, k = f, 1
            elif f.kind == "pow" and f.value > 0 and f.args[0].kind == "var":
                base, k = f.args[0], f.value
            else:
                return None
            if base.value not in index:
                return None
            expo[index[base.value]] += k
        key = tuple(expo)
        out[key] = out.get(key, Fraction(0)) + c
    return {k: c for k, c in out.items() if c != 0}


def from_polynomial(poly: Mapping[tuple[int, ...], Fraction], variables: Sequence[str]) -> Expr:
    terms = []
    for expo, c in poly.items():
        factors = [power(var(v), k) for v, k in zip(variables, expo) if k]
        terms.append(mul(c, *factors))
    return add(*terms)


def monomial(expo: Sequence[int], variables: Sequence[str]) -> Expr:
    return mul(*[power(var(v), k) for v, k in zip(variables, expo) if k])


# ---------------------------------------------------------------------------
# printing


def _fmt_const(q: Fraction) -> str:
    if q.denominator == 1:
        return str(q.numerator)
    return f"{q.numerator}/{q.denominator}"


def _atom(e: Expr) -> str:
    if e.kind in ("var",) or e.kind in FUNCTIONS:
        return to_string(e)
    if e.kind == "const" and e.value >= 0 and e.value.denominator == 1:
        return to_string(e)
    return f"({to_string(e)})"


def _unsigned_term(t: Expr) -> tuple[bool, str]:
    c, mono = _split_coeff(t)
    negative = c < 0
    c = abs(c)
    if mono == ONE:
        return negative, _fmt_const(c)
    body = _product_str(mono)
    if c == 1:
        return negative, body
    return negative, f"{_fmt_const(c)}*{body}"


def _product_str(mono: Expr) -> str:
    factors = mono.args if mono.kind == "mul" else (mono,)
    return "*".join(_factor_str(f) for f in factors)


def _factor_str(f: Expr) -> str:
    if f.kind == "pow":
        return f"{_atom(f.args[0])}^{f.value}"
    if f.kind == "add":
        return f"({to_string(f)})"
    return to_string(f)


def to_string(e: Expr) -> str:
    """Render ``e`` in the input grammar (plus a leading unary minus)."""
    k = e.kind
    if k == "const":
        return ("-" if e.value < 0 else "") + _fmt_const(abs(e.value))
    if k == "var":
        return e.value
    if k in FUNCTIONS:
        return f"{k}({to_string(e.args[0])})"
    if k == "pow":
        return _factor_str(e)
    if k == "mul":
        neg_, body = _unsigned_term(e)
        return ("-" if neg_ else "") + body
    parts = []
    for i, t in enumerate(e.args):
        negative, body = _unsigned_term(t)
        if i == 0:
            parts.append(("-" if negative else "") + body)
        else:
            parts.append((" - " if negative else " + ") + body)
    return "".join(parts)


# ---------------------------------------------------------------------------
# parsing

_TOKEN = re.compile(
    r"\s*(?:(?P<num>\d+\.\d*|\.\d+|\d+)|(?P<id>[A-Za-z_][A-Za-z0-9_]*)|(?P<op>[-+*/^()]))"
)


class _Parser:
    def __init__(self, text: str, variables: Iterable[str]):
        self.text = text
        self.vars = set(variables)
        self.tokens: list[tuple[str, str, int]] = []
        pos = 0
        while pos < len(text):
            m = _TOKEN.match(text, pos)
            if not m or m.end() == pos:
                rest = text[pos:]
                if rest.strip() == "":
                    break
                off = pos + (len(rest) - len(rest.lstrip()))
                raise ExprSyntaxError(f"unexpected character {text[off]!r}", self._byte(off))
            kind = m.lastgroup
            self.tokens.append((kind, m.group(kind), m.start(kind)))
            pos = m.end()
        self.i = 0

    def _byte(self, off: int) -> int:
        return len(self.text[:off].encode("utf-8"))

    def peek(self):
        return self.tokens[self.i] if self.i < len(self.tokens) else ("end", "", len(self.text))

    def take(self):
        tok = self.peek()
        self.i += 1
        return tok

    def expect(self, value: str):
        kind, text, off = self.take()
        if text != value or kind == "end":
            got = "end of input" if kind == "end" else repr(text)
            raise ExprSyntaxError(f"expected {value!r}, got {got}", self._byte(off))

    def parse(self) -> Expr:
        if not self.tokens:
            raise ExprSyntaxError("empty expression", 0)
        e = self.expr()
        kind, text, off = self.peek()
        if kind != "end":
            raise ExprSyntaxError(f"unexpected token {text!r}", self._byte(off))
        return e

    def expr(self) -> Expr:
        terms = [self.term()]
        while self.peek()[1] in ("+", "-") and self.peek()[0] == "op":
            op = self.take()[1]
            t = self.term()
            terms.append(t if op == "+" else neg(t))
        return add(*terms)

    def term(self) -> Expr:
        factors = [self.unary()]
        while self.peek()[1] in ("*", "/") and self.peek()[0] == "op":
            op, off = self.take()[1:]
            f = self.unary()
            if op == "/":
                if f.is_zero:
                    raise ExprSyntaxError("division by zero", self._byte(off))
                f = power(f, -1)
            factors.append(f)
        return mul(*factors)

    def unary(self) -> Expr:
        kind, text, _ = self.peek()
        if kind == "op" and text in ("-", "+"):
            self.take()
            e = self.unary()
            return neg(e) if text == "-" else e
        return self.factor()

    def factor(self) -> Expr:
        base = self.base()
        if self.peek()[1] == "^" and self.peek()[0] == "op":
            self.take()
            sign = 1
            if self.peek()[1] == "-" and self.peek()[0] == "op":
                self.take()
                sign = -1
            kind, text, off = self.take()
            if kind != "num" or not text.isdigit():
                raise ExprSyntaxError("exponent must be an integer literal", self._byte(off))
            k = sign * int(text)
            if base.is_zero and k < 0:
                raise ExprSyntaxError("division by zero", self._byte(off))
            return power(base, k)
        return base

    def base(self) -> Expr:
        kind, text, off = self.take()
        if kind == "num":
            return const(Fraction(text))
        if kind == "id":
            if text in FUNCTIONS:
                self.expect("(")
                arg = self.expr()
                self.expect(")")
                try:
                    return func(text, arg)
                except EvalDomainError as err:
                    raise ExprSyntaxError(str(err), self._byte(off)) from None
            if text not in self.vars:
                raise UnknownIdentifierError(text, self._byte(off))
            return var(text)
        if kind == "op" and text == "(":
            e = self.expr()
            self.expect(")")
            return e
        got = "end of input" if kind == "end" else repr(text)
        raise ExprSyntaxError(f"unexpected {got}", self._byte(off))


def parse_expr(text: str, variables: Iterable[str]) -> Expr:
    """Parse ``text`` into a canonical expression over ``variables``.

    >>> str(parse_expr("x^2 * x + 0*y", ["x", "y"]))
    'x^3'
    """
    return _Parser(text, variables).parse()
