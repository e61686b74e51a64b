import math
import re

import numpy as np
import pytest

from koopgeo.fields import Box, ControlAffineSystem

# ---------------------------------------------------------------------------
# independent oracle: evaluate grammar text directly, no tree, no simplification

_TOK = re.compile(r"\s*(\d+\.\d*|\.\d+|\d+|[A-Za-z_][A-Za-z0-9_]*|[-+*/^()])")
_FUNCS = {"exp": math.exp, "log": math.log, "sin": math.sin, "cos": math.cos}


def text_eval(text, env):
    toks = _TOK.findall(text)
    pos = [0]

    def peek():
        return toks[pos[0]] if pos[0] < len(toks) else None

    def take():
        pos[0] += 1
        return toks[pos[0] - 1]

    def expr():
        v = term()
        while peek() in ("+", "-"):
            v = v + term() if take() == "+" else v - term()
        return v

    def term():
        v = unary()
        while peek() in ("*", "/"):
            v = v * unary() if take() == "*" else v / unary()
        return v

    def unary():
        if peek() == "-":
            take()
            return -unary()
        return factor()

    def factor():
        b = base()
        if peek() == "^":
            take()
            sign = -1 if peek() == "-" and take() else 1
            return b ** (sign * int(take()))
        return b

    def base():
        t = take()
        if t == "(":
            v = expr()
            take()
            return v
        if t in _FUNCS:
            take()
            v = expr()
            take()
            return _FUNCS[t](v)
        if t[0].isdigit() or t[0] == ".":
            return float(t)
        return env[t]

    v = expr()
    assert pos[0] == len(toks)
    return v


def central_difference(fn, x, i, h=1e-5):
    xp = np.array(x, dtype=float)
    xm = np.array(x, dtype=float)
    step = h * max(1.0, abs(xp[i]))
    xp[i] += step
    xm[i] -= step
    return (fn(xp) - fn(xm)) / (2 * step)


# ---------------------------------------------------------------------------
# system corpus

def make(drift, controls=(), variables=("x",), box=None, name=""):
    return ControlAffineSystem.parse(drift, controls, variables, box, name)


@pytest.fixture
def double_integrator():
    return make(["x2", "0"], [["0", "1"]], ("x1", "x2"), name="double_integrator")


@pytest.fixture
def pendulum():
    return make(["x2", "-sin(x1)"], [["0", "1"]], ("x1", "x2"), name="pendulum")


@pytest.fixture
def frame():
    return make(["0", "0"], [["1", "0"], ["0", "1"]], ("x", "y"), name="frame")


@pytest.fixture
def unicycle():
    box = Box(((-1.0, 1.0), (-1.0, 1.0), (-3.0, 3.0)))
    return make(["0", "0", "0"], [["cos(th)", "sin(th)", "0"], ["0", "0", "1"]],
                ("x", "y", "th"), box, name="unicycle")


def unforced_corpus():
    """The five unforced systems used by the group-law and generator checks."""
    return [
        make(["1"], name="unit_speed"),
        make(["-x"], name="decay"),
        make(["x2", "-sin(x1)"], variables=("x1", "x2"), name="pendulum"),
        make(["x2", "-x1 + (1 - x1^2)*x2"], variables=("x1", "x2"), name="van_der_pol"),
        make(["-1/10*x1 - x2", "x1 - 1/10*x2"], variables=("x1", "x2"), name="spiral"),
    ]
