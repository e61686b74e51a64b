import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import make
from koopgeo.expr import const, parse_expr, to_string, var
from koopgeo.feedback import (
    DegreeSumMismatch,
    FeedbackLaw,
    RelativeDegreeUndefined,
    SingularDecoupling,
    brunovsky_realization,
    feedback_law,
    independence_check,
    relative_degree,
    verify_linearization,
)
from koopgeo.numerics import ControlSignal

X1 = var("x1")


def test_relative_degree_examples(double_integrator, pendulum):
    for sysm in (double_integrator, pendulum):
        rep = relative_degree(sysm, [X1], [0.1, 0.2])
        assert rep.degrees == (2,) and rep.valid
        assert rep.R == ((const(1),),)
        assert not rep.numeric_only
    single = make(["0"], [["1"]])
    rep = relative_degree(single, [var("x")], [0.0])
    assert rep.degrees == (1,) and rep.R == ((const(1),),)


def test_constant_output_has_no_relative_degree(double_integrator):
    rep = relative_degree(double_integrator, [const(3)], [0.0, 0.0])
    assert rep.degrees == (None,) and not rep.defined
    with pytest.raises(RelativeDegreeUndefined) as info:
        brunovsky_realization(double_integrator, [const(3)], rep)
    assert info.value.exit_code == 3


def test_degree_sum_mismatch():
    # h = x2 has relative degree 1 on a 2-state system
    sysm = make(["x2", "0"], [["0", "1"]], ("x1", "x2"))
    rep = relative_degree(sysm, [var("x2")], [0.0, 0.0])
    assert rep.degrees == (1,)
    with pytest.raises(DegreeSumMismatch) as info:
        brunovsky_realization(sysm, [var("x2")], rep)
    assert info.value.exit_code == 3


def test_independence_examples(double_integrator, pendulum):
    pts = double_integrator.box.sample(20, seed=1)
    prof = independence_check(double_integrator, [X1], [2], pts)
    assert set(prof.ranks) == {2} and prof.passed
    prof = independence_check(pendulum, [X1], [2], pts)
    assert set(prof.ranks) == {2} and prof.passed
    prof = independence_check(double_integrator, [const(1)], [None], pts)
    assert set(prof.ranks) == {0} and not prof.passed


@pytest.mark.parametrize("degrees,A,B", [
    ((2,), [[0, 1], [0, 0]], [[0], [1]]),
    ((1, 1), [[0, 0], [0, 0]], [[1, 0], [0, 1]]),
    ((3,), [[0, 1, 0], [0, 0, 1], [0, 0, 0]], [[0], [0], [1]]),
])
def test_brunovsky_blocks(degrees, A, B):
    n = sum(degrees)
    vs = tuple(f"x{i + 1}" for i in range(n))
    if degrees == (1, 1):
        sysm = make(["0", "0"], [["1", "0"], ["0", "1"]], vs)
        h = [var("x1"), var("x2")]
    else:
        drift = [f"x{i + 2}" for i in range(n - 1)] + ["0"]
        sysm = make(drift, [["0"] * (n - 1) + ["1"]], vs)
        h = [X1]
    rep = relative_degree(sysm, h, [0.0] * n)
    real = brunovsky_realization(sysm, h, rep)
    assert real.degrees == degrees
    assert np.array_equal(real.A, A) and np.array_equal(real.B, B)


def test_feedback_law_examples(double_integrator, pendulum):
    rep = relative_degree(double_integrator, [X1], [0, 0])
    assert feedback_law(double_integrator, [X1], rep, [0.0], [1.0, 0.0]) == pytest.approx([0.0])
    rep = relative_degree(pendulum, [X1], [0, 0])
    for x in ([0.3, 0.0], [-1.2, 0.5]):
        assert feedback_law(pendulum, [X1], rep, [0.0], x) == pytest.approx([math.sin(x[0])])
    law = FeedbackLaw(pendulum, [X1], rep)
    assert to_string(law.symbolic[0]) == "sin(x1) + v"
    frame = make(["0", "0"], [["1", "0"], ["0", "1"]], ("x1", "x2"))
    h = [var("x1"), var("x2")]
    rep = relative_degree(frame, h, [0, 0])
    assert feedback_law(frame, h, rep, [0.4, -2.0], [3.0, 1.0]) == pytest.approx([0.4, -2.0])


def test_law_inverts_forward_map():
    sysm = make(["x2", "-sin(x1)"], [["0", "2 + cos(x1)"]], ("x1", "x2"))
    rep = relative_degree(sysm, [X1], [0, 0])
    law = FeedbackLaw(sysm, [X1], rep)
    for x in np.random.default_rng(0).uniform(-1, 1, size=(10, 2)):
        v = np.array([0.7])
        assert law.forward(law(v, x), x) == pytest.approx(v, abs=1e-12)


def test_singular_decoupling_is_detected():
    sysm = make(["sin(x2)", "0"], [["0", "1"]], ("x1", "x2"))
    rep = relative_degree(sysm, [X1], [0.0, 0.0])
    law = FeedbackLaw(sysm, [X1], rep)
    with pytest.raises(SingularDecoupling):
        law([0.0], [0.0, math.pi / 2])


def test_verify_double_integrator(double_integrator):
    rep = relative_degree(double_integrator, [X1], [0, 0])
    v = ControlSignal.from_exprs(["cos(3*t) - 1/2"])
    check = verify_linearization(double_integrator, [X1], rep, v, [0.5, -0.2], 2.0)
    assert check.deviation <= 1e-6


def test_verify_pendulum_free_motion(pendulum):
    rep = relative_degree(pendulum, [X1], [0, 0])
    check = verify_linearization(pendulum, [X1], rep, ControlSignal.zero(1), [0.3, 0.0], 2.0)
    assert check.deviation <= 1e-6
    assert np.allclose(check.phi, [[0.3, 0.0]] * len(check.phi), atol=1e-6)


def test_verify_at_equilibrium(pendulum):
    rep = relative_degree(pendulum, [X1], [0, 0])
    check = verify_linearization(pendulum, [X1], rep, ControlSignal.zero(1), [0.0, 0.0], 1.0)
    assert check.deviation <= 1e-8


def test_tighter_tolerance_tightens_the_deviation():
    # phi = (x1, sin x2) is a genuine change of coordinates, so integration
    # error shows up in the deviation
    sysm = make(["sin(x2)", "0"], [["0", "1"]], ("x1", "x2"))
    rep = relative_degree(sysm, [X1], [0.0, 0.0])
    v = ControlSignal.from_exprs(["3/10*sin(3*t)"])
    devs = [verify_linearization(sysm, [X1], rep, v, [0.2, 0.1], 2.0, tol=tol, samples=2).deviation
            for tol in (1e-5, 1e-6, 1e-7)]
    assert devs[1] * 5 <= devs[0] and devs[2] * 5 <= devs[1]


@settings(max_examples=20, deadline=None)
@given(st.sampled_from([2, 3, -1, Fraction(1, 2)]), st.floats(-1, 1), st.floats(-1, 1))
def test_relative_degree_is_invariant_under_output_scaling(c, a, b):
    sysm = make(["x2", "-sin(x1) - x2"], [["0", "1"]], ("x1", "x2"))
    h = parse_expr("x1 + x1^3", ("x1", "x2"))
    base = relative_degree(sysm, [h], [a, b])
    scaled = relative_degree(sysm, [h * c], [a, b])
    assert base.degrees == scaled.degrees == (2,)


def test_chain_phi_coordinates(pendulum):
    rep = relative_degree(pendulum, [X1], [0, 0])
    real = brunovsky_realization(pendulum, [X1], rep)
    assert [to_string(e) for e in real.phi] == ["x1", "x2"]


def test_render_mentions_status(pendulum):
    text = relative_degree(pendulum, [X1], [0, 0]).render()
    assert "relative degree r=(2)" in text and text.endswith("status: valid")
