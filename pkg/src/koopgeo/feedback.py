"""Relative degree, Brunovsky realization and linearizing feedback.

Outputs ``h_i`` are used directly in Lie derivatives; restricting them to the
controllable submanifold happens implicitly because every evaluation point
comes from trajectories of the system itself.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

import numpy as np

from .controllability import numeric_rank
from .expr import Expr, add, diff, lambdify, mul, power, to_string, var
from .fields import ControlAffineSystem, iterated_lie_derivative, lie_derivative, zero_certificate
from .numerics import ControlSignal, StepSizeUnderflow, solve_ode

COND_LIMIT = 1e10


class LinearizationError(RuntimeError):
    """Base class; ``exit_code`` is the CLI status for this failure."""

    exit_code = 1


class RelativeDegreeUndefined(LinearizationError):
    exit_code = 3


class DegreeSumMismatch(LinearizationError):
    exit_code = 3


class SingularDecoupling(LinearizationError):
    def __init__(self, message: str, time: float | None = None):
        super().__init__(message if time is None else f"{message} at t={time!r}")
        self.time = time


@dataclass(frozen=True)
class RelativeDegreeReport:
    outputs: tuple[Expr, ...]
    degrees: tuple[int | None, ...]
    point: np.ndarray
    cap: int
    R: tuple[tuple[Expr, ...], ...] | None
    R_at_point: np.ndarray | None
    rank: int
    certificates: dict = field(default_factory=dict)
    variables: tuple[str, ...] = ()

    @property
    def defined(self) -> bool:
        return all(r is not None for r in self.degrees)

    @property
    def valid(self) -> bool:
        return self.defined and self.rank == len(self.outputs)

    @property
    def numeric_only(self) -> bool:
        """True if some vanishing Lie derivative was certified numerically only."""
        return any(c == "numeric" for c in self.certificates.values())

    def render(self) -> str:
        degs = ",".join("undefined" if r is None else str(r) for r in self.degrees)
        pt = ",".join(format(float(x), ".17g") for x in self.point)
        lines = [f"relative degree r=({degs}) at p=({pt}) cap={self.cap}"]
        if self.R is not None:
            lines.append("decoupling matrix R:")
            for row in self.R:
                lines.append("  [" + ", ".join(to_string(e) for e in row) + "]")
            lines.append(f"rank R(p) = {self.rank} (l = {len(self.outputs)})")
        zero_kinds = sorted(set(self.certificates.values()))
        lines.append("zero certificates: " + (", ".join(zero_kinds) if zero_kinds else "none"))
        if self.numeric_only:
            lines.append("warning: some zeros are certified numerically only")
        lines.append("status: " + ("valid" if self.valid else
                                   "undefined at cap" if not self.defined else
                                   "invalid (R rank-deficient at p)"))
        return "\n".join(lines)

    __str__ = render


def _as_outputs(h) -> tuple[Expr, ...]:
    return (h,) if isinstance(h, Expr) else tuple(h)


def relative_degree(sys: ControlAffineSystem, h, p, cap: int | None = None,
                    seed: int = 0) -> RelativeDegreeReport:
    """Smallest r_i with some L_gj L_f^(r_i - 1) h_i not identically zero.

    Zeros are certified symbolically when possible and otherwise at Halton
    points of the system's analysis box (flagged as numeric).
    """
    outputs = _as_outputs(h)
    cap = cap if cap is not None else 2 * sys.n
    if cap < 1:
        raise ValueError("cap must be >= 1")
    variables = sys.variables
    p = np.asarray(p, dtype=float)
    degrees, certs, R_rows = [], {}, []
    for i, hi in enumerate(outputs):
        lf = hi
        found = None
        for k in range(cap):
            row = [lie_derivative(g, lf) for g in sys.controls]
            kinds = [zero_certificate(e, variables, sys.box, seed) for e in row]
            if any(kind is None for kind in kinds):
                found = (k + 1, row)
                break
            for j, kind in enumerate(kinds):
                certs[(i, j, k)] = kind
            lf = lie_derivative(sys.drift, lf)
        if found is None:
            degrees.append(None)
            R_rows.append(None)
        else:
            degrees.append(found[0])
            R_rows.append(tuple(found[1]))
    if all(r is not None for r in R_rows) and sys.m:
        R = tuple(R_rows)
        flat = [e for row in R for e in row]
        R_num = lambdify(flat, variables)(p).reshape(len(outputs), sys.m)
        rank = numeric_rank(R_num)[0]
    else:
        R, R_num, rank = None, None, 0
    return RelativeDegreeReport(outputs, tuple(degrees), p, cap, R, R_num, rank, certs, variables)


def _chain(sys: ControlAffineSystem, outputs, degrees) -> list[Expr]:
    phi = []
    for hi, r in zip(outputs, degrees):
        lf = hi
        for _ in range(r):
            phi.append(lf)
            lf = lie_derivative(sys.drift, lf)
    return phi


@dataclass(frozen=True)
class IndependenceProfile:
    points: np.ndarray
    ranks: tuple[int, ...]
    l: int
    n: int
    full: bool

    @property
    def passed(self) -> bool:
        required = self.n if self.full else self.l
        return bool(self.ranks) and all(r >= required for r in self.ranks) and required > 0

    @property
    def failures(self) -> list[np.ndarray]:
        required = self.n if self.full else self.l
        return [p for p, r in zip(self.points, self.ranks) if r < required]


def independence_check(sys: ControlAffineSystem, h, r: Sequence[int | None], points
                       ) -> IndependenceProfile:
    """Ranks of the matrix of differentials d(L_f^k h_i), k < r_i, at each point."""
    outputs = _as_outputs(h)
    degs = [1 if ri is None else ri for ri in r]
    phi = _chain(sys, outputs, degs)
    grads = [diff(e, v) for e in phi for v in sys.variables]
    fn = lambdify(grads, sys.variables)
    points = np.atleast_2d(np.asarray(points, dtype=float))
    ranks = tuple(numeric_rank(fn(pt).reshape(len(phi), sys.n))[0] for pt in points)
    full = all(ri is not None for ri in r) and sum(degs) == sys.n
    return IndependenceProfile(points, ranks, len(outputs), sys.n, full)


def shift_block(r: int) -> np.ndarray:
    return np.eye(r, k=1)


@dataclass(frozen=True)
class BrunovskyRealization:
    A: np.ndarray
    B: np.ndarray
    phi: tuple[Expr, ...]
    degrees: tuple[int, ...]

    def render(self) -> str:
        def rows(M):
            return [" ".join(format(float(x), ".17g") for x in row) for row in M]

        lines = [f"brunovsky form r=({','.join(map(str, self.degrees))})",
                 "phi = (" + ", ".join(to_string(e) for e in self.phi) + ")"]
        return "\n".join(lines + ["A:"] + rows(self.A) + ["B:"] + rows(self.B))

    __str__ = render


def brunovsky_realization(sys: ControlAffineSystem, h, report: RelativeDegreeReport
                          ) -> BrunovskyRealization:
    """Coordinates phi = (h_1, L_f h_1, ..., L_f^(r_l - 1) h_l) and the block pair (A, B)."""
    outputs = _as_outputs(h)
    if not report.defined:
        raise RelativeDegreeUndefined("relative degree undefined within the cap")
    if sum(report.degrees) != sys.n:
        raise DegreeSumMismatch(
            f"degree sum {sum(report.degrees)} != n = {sys.n}; partial linearization not supported")
    if not report.valid:
        raise LinearizationError("decoupling matrix is rank-deficient at the report point")
    n, l = sys.n, len(outputs)
    A = np.zeros((n, n))
    B = np.zeros((n, l))
    offset = 0
    for i, r in enumerate(report.degrees):
        A[offset:offset + r, offset:offset + r] = shift_block(r)
        B[offset + r - 1, i] = 1.0
        offset += r
    phi = tuple(_chain(sys, outputs, report.degrees))
    return BrunovskyRealization(A, B, phi, tuple(report.degrees))


class FeedbackLaw:
    """u(x, v) solving R(x) u = v - b(x), b_i = L_f^(r_i) h_i.

    Minimum-norm solution when there are more inputs than outputs.
    """

    def __init__(self, sys: ControlAffineSystem, h, report: RelativeDegreeReport):
        if not report.defined or report.R is None:
            raise RelativeDegreeUndefined("relative degree undefined within the cap")
        self.sys = sys
        self.outputs = _as_outputs(h)
        self.report = report
        self.l, self.m = len(self.outputs), sys.m
        self.b = tuple(iterated_lie_derivative(sys.drift, hi, r)
                       for hi, r in zip(self.outputs, report.degrees))
        flat = [e for row in report.R for e in row]
        self._R = lambdify(flat, sys.variables)
        self._b = lambdify(self.b, sys.variables)

    def decoupling(self, x) -> np.ndarray:
        return self._R(x).reshape(self.l, self.m)

    def drift_term(self, x) -> np.ndarray:
        return self._b(x)

    def __call__(self, v, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        R = self.decoupling(x)
        sv = np.linalg.svd(R, compute_uv=False)
        # the floor at 1 makes a 1 x 1 R near zero count as singular too
        if len(sv) < self.l or sv[-1] * COND_LIMIT <= max(sv[0], 1.0):
            raise SingularDecoupling(f"decoupling matrix singular or ill-conditioned at x={x}")
        rhs = np.asarray(v, dtype=float) - self.drift_term(x)
        if self.l == self.m:
            return np.linalg.solve(R, rhs)
        return np.linalg.pinv(R) @ rhs

    def forward(self, u, x) -> np.ndarray:
        """v = R(x) u + b(x): the new input generated by u at x."""
        return self.decoupling(x) @ np.asarray(u, dtype=float) + self.drift_term(x)

    @cached_property
    def symbolic(self) -> tuple[Expr, ...] | None:
        """Closed form of u in terms of x and v1..vl, available for l = m = 1."""
        if self.l != 1 or self.m != 1:
            return None
        v = var("v")
        return (mul(add(v, mul(-1, self.b[0])), power(self.report.R[0][0], -1)),)


def feedback_law(sys: ControlAffineSystem, h, report: RelativeDegreeReport, v_target, x
                 ) -> np.ndarray:
    return FeedbackLaw(sys, h, report)(v_target, x)


@dataclass(frozen=True)
class LinearizationCheck:
    times: np.ndarray
    states: np.ndarray
    phi: np.ndarray
    zeta: np.ndarray
    deviation: float


def verify_linearization(sys: ControlAffineSystem, h, report: RelativeDegreeReport,
                         v: ControlSignal, x0, t_end: float, tol: float = 1e-9,
                         samples: int = 201) -> LinearizationCheck:
    """Closed loop under the linearizing law against zeta' = A zeta + B v.

    Both systems share one integration; ``deviation`` is the sup-norm of
    phi(x(t)) - zeta(t) over the accepted steps.
    """
    real = brunovsky_realization(sys, h, report)
    law = FeedbackLaw(sys, h, report)
    if v.m != law.l:
        raise ValueError(f"new input needs {law.l} channels, got {v.m}")
    n = sys.n
    phi_fn = lambdify(real.phi, sys.variables)
    A, B = real.A, real.B

    def rhs(t, y):
        x, zeta = y[:n], y[n:]
        vt = v(t)
        try:
            u = law(vt, x)
        except SingularDecoupling as err:
            raise SingularDecoupling("decoupling matrix singular", t) from err
        dx = sys.drift(x)
        for uj, g in zip(u, sys.controls):
            dx = dx + uj * g(x)
        return np.concatenate([dx, A @ zeta + B @ vt])

    x0 = np.asarray(x0, dtype=float)
    y0 = np.concatenate([x0, phi_fn(x0)])
    stops = np.linspace(0.0, t_end, samples) if t_end else ()
    try:
        ts, ys, _ = solve_ode(rhs, 0.0, y0, t_end, tol, stops)
    except StepSizeUnderflow as err:
        raise SingularDecoupling("closed loop broke down (step size underflow)", err.time) from err
    xs, zetas = ys[:, :n], ys[:, n:]
    phis = np.array([phi_fn(x) for x in xs])
    dev = float(np.max(np.abs(phis - zetas))) if len(ts) else 0.0
    return LinearizationCheck(ts, xs, phis, zetas, dev)
