import math

import numpy as np
import pytest
import scipy.linalg
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import make
from koopgeo.expr import parse_expr
from koopgeo.fields import Box, VectorField
from koopgeo.lift import (
    DictionaryTooLarge,
    LiftError,
    ObservableDictionary,
    bilinearize,
    build_monomial_dictionary,
    compare_lift,
    exp_generator,
    export_matrices,
    generator_matrix,
    lift_error,
    read_matrices,
    simulate_lift,
)
from koopgeo.numerics import ControlSignal


def names(d):
    return [str(p) for p in d]


def test_dictionary_enumeration():
    assert names(build_monomial_dictionary(1, 2)) == ["1", "x", "x^2"]
    assert names(build_monomial_dictionary(2, 1)) == ["1", "x1", "x2"]
    d = build_monomial_dictionary(2, 2)
    assert len(d) == math.comb(4, 2) == 6
    assert names(d) == ["1", "x1", "x2", "x1^2", "x1*x2", "x2^2"]


@pytest.mark.parametrize("n,d", [(1, 5), (2, 4), (3, 3), (4, 2)])
def test_dictionary_size_is_binomial(n, d):
    dic = build_monomial_dictionary(n, d)
    assert len(dic) == math.comb(n + d, d)
    assert len(set(dic)) == len(dic)


def test_dictionary_size_cap():
    with pytest.raises(DictionaryTooLarge):
        build_monomial_dictionary(10, 12)


def test_generator_of_decay():
    L, res = generator_matrix(VectorField.parse(["-x"], ["x"]), build_monomial_dictionary(1, 2))
    assert np.array_equal(L, np.diag([0.0, -1.0, -2.0]))
    assert np.all(res == 0)


def test_generator_of_unit_speed():
    L, res = generator_matrix(VectorField.parse(["1"], ["x"]), build_monomial_dictionary(1, 1))
    assert np.array_equal(L, [[0.0, 0.0], [1.0, 0.0]])
    assert np.all(res == 0)


def test_closure_failure_is_reported():
    gm = generator_matrix(VectorField.parse(["x^2"], ["x"]), build_monomial_dictionary(1, 1))
    assert not gm.exact
    assert gm.residuals[0] == 0 and gm.residuals[1] > 0
    assert str(gm.remainders[1]) == "x^2"


def test_bilinearize_single_integrator_with_decay():
    lifted = bilinearize(make(["-x"], [["1"]]), build_monomial_dictionary(1, 2))
    assert lifted.exact
    assert np.array_equal(lifted.A, np.diag([0.0, -1.0, -2.0]))
    (N,) = lifted.N
    assert np.array_equal(N, [[0, 0, 0], [1, 0, 0], [0, 2, 0]])


def test_unforced_lift_has_no_input_matrices():
    lifted = bilinearize(make(["-x"]), build_monomial_dictionary(1, 3))
    assert lifted.N == () and lifted.exact


def test_double_integrator_drift_is_strictly_upper_triangular(double_integrator):
    lifted = bilinearize(double_integrator, build_monomial_dictionary(2, 2))
    assert lifted.exact
    assert np.array_equal(lifted.A, np.triu(lifted.A, 1))
    assert np.any(lifted.A)


def test_simulate_lift_zero_time():
    lifted = bilinearize(make(["-x"]), build_monomial_dictionary(1, 2))
    traj = simulate_lift(lifted, None, [1.0, 2.0, 3.0], 0.0)
    assert np.array_equal(traj.states[-1], [1.0, 2.0, 3.0])


def test_exact_lift_error():
    sysm = make(["-x"])
    d = build_monomial_dictionary(1, 3)
    assert lift_error(sysm, d, None, [0.8], 1.0) <= 1e-7
    assert lift_error(sysm, d, None, [0.8], 0.0) == 0.0


def test_truncated_lift_improves_with_degree():
    sysm = make(["x^2"])
    errs = [lift_error(sysm, build_monomial_dictionary(1, d), None, [0.1], 1.0, tol=1e-12)
            for d in (3, 4, 5, 6)]
    assert errs[0] > 0
    assert all(a > b for a, b in zip(errs, errs[1:]))


def test_lift_matches_matrix_exponential():
    # unforced linear lifts: z(t) = exp(tA) z0
    sysm = make(["-1/10*x1 - x2", "x1 - 1/10*x2"], variables=("x1", "x2"))
    d = build_monomial_dictionary(2, 3)
    lifted = bilinearize(sysm, d)
    z0 = d.evaluate(np.array([0.3, -0.4]))
    z1 = simulate_lift(lifted, None, z0, 1.5, tol=1e-12).states[-1]
    assert np.allclose(z1, exp_generator(lifted.A, 1.5) @ z0, atol=1e-10)


def test_exp_generator_examples():
    L = np.diag([0.0, -1.0, -2.0])
    assert np.array_equal(exp_generator(L, 0.0), np.eye(3))
    assert np.allclose(exp_generator(L, 1.0), np.diag([1, math.exp(-1), math.exp(-2)]),
                       atol=1e-12, rtol=0)
    A = bilinearize(make(["x2", "0"], variables=("x1", "x2")), build_monomial_dictionary(2, 1)).A
    assert np.array_equal(A @ A, np.zeros((3, 3)))
    assert np.array_equal(exp_generator(A, 1.0), np.eye(3) + A)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(-3, 3), st.floats(-3, 3))
def test_exp_generator_against_scipy_and_semigroup(seed, s, t):
    L = np.random.default_rng(seed).normal(size=(5, 5))
    assert np.allclose(exp_generator(L, t), scipy.linalg.expm(t * L), rtol=1e-10, atol=1e-12)
    lhs = exp_generator(L, s + t)
    rhs = exp_generator(L, s) @ exp_generator(L, t)
    assert np.allclose(lhs, rhs, rtol=1e-9, atol=1e-9 * max(1.0, np.abs(lhs).max()))


def test_frame_lift_matrices_commute(frame):
    for deg in (1, 2, 4):
        N1, N2 = bilinearize(frame, build_monomial_dictionary(2, deg, ("x", "y"))).N
        assert np.max(np.abs(N1 @ N2 - N2 @ N1)) <= 1e-12


def test_noncommuting_lift_witness():
    # f = (x), g = (1): the lifted matrices inherit [f, g] != 0
    lifted = bilinearize(make(["x"], [["1"]]), build_monomial_dictionary(1, 3))
    A, (N,) = lifted.A, lifted.N
    assert np.max(np.abs(A @ N - N @ A)) > 0.5


@settings(max_examples=30, deadline=None)
@given(st.lists(st.integers(-4, 4), min_size=6, max_size=6),
       st.lists(st.integers(-4, 4), min_size=6, max_size=6))
def test_generator_is_linear_in_field(a, b):
    terms = ["1", "x1", "x2", "x1^2", "x1*x2", "x2^2"]
    poly = lambda c: " + ".join(f"({k})*{t}" for k, t in zip(c, terms))
    v = VectorField.parse([poly(a), poly(a[::-1])], ("x1", "x2"))
    w = VectorField.parse([poly(b), poly(b[::-1])], ("x1", "x2"))
    d = build_monomial_dictionary(2, 2)
    Lsum = generator_matrix(v + w, d).matrix
    assert np.array_equal(Lsum, generator_matrix(v, d).matrix + generator_matrix(w, d).matrix)


def test_projection_branch_for_nonpolynomial_field(pendulum):
    d = build_monomial_dictionary(2, 3)
    lifted = bilinearize(pendulum, d, box=Box.unit(2))
    assert lifted.projected and not lifted.exact
    assert lifted.residuals.shape == (2, len(d))
    # L_f x1 = x2 lies in the span, so that row is fit exactly
    assert lifted.residuals[0, 1] < 1e-12
    assert lifted.residuals[0, 2] > 0


def test_projection_needs_a_box():
    d = build_monomial_dictionary(2, 2)
    with pytest.raises(LiftError):
        generator_matrix(VectorField.parse(["x2", "-sin(x1)"], ("x1", "x2")), d)


def test_custom_dictionary_reduction():
    # L_v of psi = x1 + x2 expands over {1, x1, x2} even though the entry is not a monomial
    vs = ("x1", "x2")
    d = ObservableDictionary([parse_expr(t, vs) for t in ("1", "x1 + x2", "x1 - x2")], vs)
    v = VectorField.parse(["x2", "x1"], vs)
    gm = generator_matrix(v, d)
    assert gm.exact
    assert np.allclose(gm.matrix, [[0, 0, 0], [0, 1, 0], [0, 0, -1]])


def test_piecewise_exact_lift(double_integrator):
    d = build_monomial_dictionary(2, 2)
    u = ControlSignal.piecewise_constant([0.25, 0.5, 0.75], [[1.0], [-1.0], [0.0], [1.0]])
    comp = compare_lift(double_integrator, d, u, [0.2, -0.1], 1.0)
    assert comp.sup_error <= 1e-6


def test_export_round_trip():
    rng = np.random.default_rng(3)
    A = rng.normal(size=(4, 4))
    N = [rng.normal(size=(4, 4)) for _ in range(2)]
    A2, N2 = read_matrices("# comment\n" + export_matrices(A, N))
    assert np.array_equal(A, A2)
    assert all(np.array_equal(a, b) for a, b in zip(N, N2))
