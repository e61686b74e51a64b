"""Flows of control-affine systems and numerical checks of Koopman identities.

The integrator is the Dormand-Prince 5(4) embedded pair with local
extrapolation.  Absolute and relative tolerances are both set to ``tol``.
Dense output between accepted steps uses cubic Hermite interpolation.

The checks here are pointwise: convergence statements about the Koopman
group in operator topologies have no finite certificate, so every function
reports residuals at explicit sample points only.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .expr import Expr, EvalDomainError, lambdify, parse_expr
from .fields import ControlAffineSystem, VectorField, lie_derivative

# Dormand-Prince coefficients
_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
_B = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
# 5th order minus embedded 4th order weights
_E = np.array([71 / 57600, 0.0, -71 / 16695, 71 / 1920, -17253 / 339200, 22 / 525, -1 / 40])

_SAFETY = 0.9
_MIN_FACTOR = 0.2
_MAX_FACTOR = 5.0
_MAX_STEPS = 1_000_000


class IntegrationError(RuntimeError):
    pass


class StepSizeUnderflow(IntegrationError):
    """The adaptive step collapsed; the solution most likely blows up."""

    def __init__(self, t: float):
        super().__init__(f"step size underflow at t={t!r} (finite-time blow-up?)")
        self.time = t


@dataclass(frozen=True)
class Trajectory:
    """Accepted integrator nodes, sorted by increasing time.

    ``derivatives`` holds the vector field at each node and drives the cubic
    Hermite dense output of :meth:`at`.
    """

    times: np.ndarray
    states: np.ndarray
    derivatives: np.ndarray
    tol: float

    def __post_init__(self):
        if self.states.shape[0] != self.times.shape[0]:
            raise ValueError("times and states differ in length")
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("times must be strictly increasing")

    def __len__(self):
        return len(self.times)

    @property
    def dim(self) -> int:
        return self.states.shape[1]

    def at(self, t: float) -> np.ndarray:
        ts = self.times
        if t == ts[0]:
            return self.states[0].copy()
        if not ts[0] <= t <= ts[-1]:
            raise ValueError(f"t={t} outside [{ts[0]}, {ts[-1]}]")
        i = min(int(np.searchsorted(ts, t, side="right")) - 1, len(ts) - 2)
        t0, t1 = ts[i], ts[i + 1]
        h = t1 - t0
        s = (t - t0) / h
        y0, y1 = self.states[i], self.states[i + 1]
        f0, f1 = self.derivatives[i], self.derivatives[i + 1]
        h00 = 2 * s**3 - 3 * s**2 + 1
        h10 = s**3 - 2 * s**2 + s
        h01 = -2 * s**3 + 3 * s**2
        h11 = s**3 - s**2
        return h00 * y0 + h10 * h * f0 + h01 * y1 + h11 * h * f1

    def sample(self, times: Sequence[float]) -> np.ndarray:
        return np.array([self.at(t) for t in times])


def _initial_step(fun, t0, y0, f0, direction, tol, order=5):
    scale = tol + np.abs(y0) * tol
    d0 = np.sqrt(np.mean((y0 / scale) ** 2))
    d1 = np.sqrt(np.mean((f0 / scale) ** 2))
    h0 = 1e-6 if d0 < 1e-5 or d1 < 1e-5 else 0.01 * d0 / d1
    y1 = y0 + direction * h0 * f0
    f1 = fun(t0 + direction * h0, y1)
    d2 = np.sqrt(np.mean(((f1 - f0) / scale) ** 2)) / h0
    if d1 <= 1e-15 and d2 <= 1e-15:
        h1 = max(1e-6, h0 * 1e-3)
    else:
        h1 = (0.01 / max(d1, d2)) ** (1.0 / (order + 1))
    return min(100 * h0, h1)


def solve_ode(fun: Callable[[float, np.ndarray], np.ndarray], t0: float, y0,
              t1: float, tol: float, stops: Sequence[float] = ()
              ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Integrate ``y' = fun(t, y)`` from ``t0`` to ``t1``.

    Returns node times, states and derivatives in integration order.  Every
    time in ``stops`` that lies strictly between ``t0`` and ``t1`` is hit
    exactly by an accepted step.
    """
    if not tol > 0:
        raise ValueError("tol must be positive")
    y = np.array(y0, dtype=float)
    f = np.asarray(fun(t0, y), dtype=float)
    ts, ys, fs = [t0], [y.copy()], [f.copy()]
    if t1 == t0:
        return np.array(ts), np.array(ys), np.array(fs)
    direction = 1.0 if t1 > t0 else -1.0
    targets = sorted((s for s in stops if 0 < direction * (s - t0) < abs(t1 - t0)),
                     key=lambda s: direction * s)
    targets.append(t1)
    target_i = 0
    span = abs(t1 - t0)
    h = min(_initial_step(fun, t0, y, f, direction, tol), span)
    t = t0
    k = np.empty((7, y.size))
    for _ in range(_MAX_STEPS):
        min_step = 16 * np.finfo(float).eps * max(abs(t), 1.0)
        target = targets[target_i]
        remaining = abs(target - t)
        # a target closer than min_step may still be reached in one step
        if h < min_step and h < remaining:
            raise StepSizeUnderflow(t)
        hit = h >= remaining * (1 - 1e-12)
        h_free = h
        if hit:
            h = remaining
        last = hit and target_i == len(targets) - 1
        dt = direction * h
        k[0] = f
        try:
            for i in range(1, 7):
                yi = y + dt * (np.asarray(_A[i]) @ k[:i])
                k[i] = fun(t + _C[i] * dt, yi)
            y_new = y + dt * (_B[:6] @ k[:6])
            ok = np.all(np.isfinite(k)) and np.all(np.isfinite(y_new))
        except (OverflowError, FloatingPointError):
            ok = False
        if not ok:
            h *= _MIN_FACTOR
            continue
        err_vec = dt * (_E @ k)
        scale = tol + tol * np.maximum(np.abs(y), np.abs(y_new))
        err = float(np.sqrt(np.mean((err_vec / scale) ** 2)))
        if err <= 1.0:
            t = target if hit else t + dt
            y = y_new
            f = k[6].copy()
            ts.append(t)
            ys.append(y.copy())
            fs.append(f)
            if last:
                return np.array(ts), np.array(ys), np.array(fs)
            if hit:
                # resume with the step size proposed before clipping to the stop
                target_i += 1
                h = h_free
                continue
            h *= _MAX_FACTOR if err == 0 else min(_MAX_FACTOR, _SAFETY * err ** -0.2)
        else:
            h *= max(_MIN_FACTOR, _SAFETY * err ** -0.2)
    raise IntegrationError("maximum number of steps exceeded")


def _as_trajectory(ts, ys, fs, tol) -> Trajectory:
    if len(ts) > 1 and ts[-1] < ts[0]:
        ts, ys, fs = ts[::-1], ys[::-1], fs[::-1]
    return Trajectory(np.asarray(ts, float), np.asarray(ys, float), np.asarray(fs, float), tol)


# ---------------------------------------------------------------------------
# control inputs


class ControlSignal:
    """Input u(t) with ``m`` channels.

    Either piecewise constant (``switch_times`` strictly increasing, one row
    of ``values`` per interval, extended constantly beyond the ends) or a
    closed-form expression in ``t`` per channel.
    """

    def __init__(self, m: int, switch_times=(), values=None, exprs=None):
        self.m = m
        self.switch_times = tuple(float(s) for s in switch_times)
        if np.any(np.diff(self.switch_times) <= 0):
            raise ValueError("switch times must be strictly increasing")
        self.exprs = tuple(exprs) if exprs is not None else None
        if self.exprs is not None:
            if len(self.exprs) != m:
                raise ValueError(f"expected {m} channel expressions, got {len(self.exprs)}")
            self._fn = lambdify(self.exprs, ["t"])
            self.values = None
        else:
            vals = np.zeros((len(self.switch_times) + 1, m)) if values is None else values
            self.values = np.atleast_2d(np.asarray(vals, dtype=float)).reshape(-1, m)
            if self.values.shape[0] != len(self.switch_times) + 1:
                raise ValueError("need one value row per interval")

    @classmethod
    def zero(cls, m: int) -> "ControlSignal":
        return cls(m)

    @classmethod
    def constant(cls, value: Sequence[float]) -> "ControlSignal":
        value = np.atleast_1d(np.asarray(value, dtype=float))
        return cls(len(value), (), [value])

    @classmethod
    def piecewise_constant(cls, switch_times, values) -> "ControlSignal":
        values = np.asarray(values, dtype=float)
        if values.ndim == 1:
            values = values[:, None]
        return cls(values.shape[1], switch_times, values)

    @classmethod
    def from_exprs(cls, exprs: Sequence[Expr | str]) -> "ControlSignal":
        parsed = [parse_expr(e, ["t"]) if isinstance(e, str) else e for e in exprs]
        return cls(len(parsed), exprs=parsed)

    @property
    def is_piecewise(self) -> bool:
        return self.exprs is None

    def __call__(self, t: float) -> np.ndarray:
        if self.exprs is not None:
            return self._fn([t])
        i = int(np.searchsorted(self.switch_times, t, side="right"))
        return self.values[i]

    def segments(self, t0: float, t1: float) -> list[tuple[float, float]]:
        """Split [t0, t1] (either orientation) at the switch times."""
        lo, hi = min(t0, t1), max(t0, t1)
        cuts = [s for s in self.switch_times if lo < s < hi] if self.is_piecewise else []
        pts = [lo, *cuts, hi]
        segs = list(zip(pts[:-1], pts[1:]))
        if t1 < t0:
            segs = [(b, a) for a, b in reversed(segs)]
        return segs


def _piecewise_solve(make_rhs, u: ControlSignal | None, y0, t_end, tol, t0=0.0,
                     stops: Sequence[float] = ()) -> Trajectory:
    if u is None or not u.is_piecewise or not u.switch_times:
        rhs = make_rhs(None)
        return _as_trajectory(*solve_ode(rhs, t0, y0, t_end, tol, stops), tol)
    ts, ys, fs = [], [], []
    y = np.asarray(y0, dtype=float)
    for a, b in u.segments(t0, t_end):
        held = u(0.5 * (a + b))
        seg_t, seg_y, seg_f = solve_ode(make_rhs(held), a, y, b, tol, stops)
        start = 0 if not ts else 1
        ts.extend(seg_t[start:])
        ys.extend(seg_y[start:])
        fs.extend(seg_f[start:])
        y = seg_y[-1]
    if len(ts) == 0:
        ts, ys, fs = solve_ode(make_rhs(u(t0)), t0, y, t_end, tol)
    return _as_trajectory(np.array(ts), np.array(ys), np.array(fs), tol)


def system_rhs(sys: ControlAffineSystem, u: ControlSignal | None, held=None):
    drift = sys.drift
    controls = sys.controls
    if u is not None and u.m != sys.m:
        raise ValueError(f"control signal has {u.m} channels, system has {sys.m}")

    def rhs(t, x):
        dx = drift(x)
        if controls and u is not None:
            uv = held if held is not None else u(t)
            for ui, g in zip(uv, controls):
                if ui != 0.0:
                    dx = dx + ui * g(x)
        return dx

    return rhs


def integrate_flow(sys: ControlAffineSystem, u: ControlSignal | None, x0, t_end: float,
                   tol: float = 1e-9, stops: Sequence[float] = ()) -> Trajectory:
    """Trajectory of ``sys`` from ``x0`` at time 0 to ``t_end`` (may be negative).

    ``stops`` are output times the integrator lands on exactly.
    """
    x0 = np.asarray(x0, dtype=float)
    if x0.shape != (sys.n,):
        raise ValueError(f"x0 must have length {sys.n}")
    try:
        return _piecewise_solve(lambda held: system_rhs(sys, u, held), u, x0, t_end, tol,
                                stops=stops)
    except EvalDomainError:
        raise
    except ZeroDivisionError as err:
        raise EvalDomainError("division by zero while integrating") from err


def flow_map(sys: ControlAffineSystem, x0, t: float, u: ControlSignal | None = None,
             tol: float = 1e-9) -> np.ndarray:
    """Phi_t(x0): endpoint of the flow."""
    traj = integrate_flow(sys, u, x0, t, tol)
    return traj.states[-1] if t >= 0 else traj.states[0]


def _eval_at(h: Expr, variables: Sequence[str], x) -> float:
    return float(lambdify([h], variables)(x)[0])


def koopman_apply(h: Expr, sys: ControlAffineSystem, u: ControlSignal | None, x0, t: float,
                  tol: float = 1e-9) -> float:
    """(U_t h)(x0) = h(Phi_t(x0))."""
    return _eval_at(h, sys.variables, flow_map(sys, x0, t, u, tol))


def check_group_law(sys: ControlAffineSystem, h: Expr, s: float, t: float, x0,
                    tol: float = 1e-9) -> float:
    """|h(Phi_{s+t}(x0)) - h(Phi_t(Phi_s(x0)))| for an unforced system."""
    if sys.m:
        raise ValueError("the group law needs an unforced (m = 0) system")
    direct = flow_map(sys, x0, s + t, tol=tol)
    composed = flow_map(sys, flow_map(sys, x0, s, tol=tol), t, tol=tol)
    fn = lambdify([h], sys.variables)
    return abs(float(fn(direct)[0]) - float(fn(composed)[0]))


def check_flow_inversion(sys: ControlAffineSystem, x0, t: float, tol: float = 1e-9) -> float:
    """||Phi_{-t}(Phi_t(x0)) - x0||_2 for an unforced system."""
    forward = flow_map(sys.unforced(), x0, t, tol=tol)
    back = flow_map(sys.unforced(), forward, -t, tol=tol)
    return float(np.linalg.norm(back - np.asarray(x0, dtype=float)))


def check_generator(f: VectorField, h: Expr, x0, t_values: Sequence[float],
                    tol: float = 1e-12) -> list[float]:
    """Residuals |(U_t h(x0) - h(x0))/t - L_f h(x0)| for each t."""
    sys = ControlAffineSystem(f)
    fn = lambdify([h], f.variables)
    h0 = float(fn(np.asarray(x0, dtype=float))[0])
    lf = _eval_at(lie_derivative(f, h), f.variables, x0)
    out = []
    for t in t_values:
        if not t > 0:
            raise ValueError("t values must be positive")
        ut = float(fn(flow_map(sys, x0, t, tol=tol))[0])
        out.append(abs((ut - h0) / t - lf))
    return out


def convergence_slope(t_values: Sequence[float], residuals: Sequence[float]) -> float:
    """Least-squares slope of log(residual) against log(t)."""
    lt = np.log(np.asarray(t_values, dtype=float))
    lr = np.log(np.asarray(residuals, dtype=float))
    return float(np.polyfit(lt, lr, 1)[0])


def integrate_variational(f: VectorField, x0, t: float, tol: float = 1e-10):
    """Flow endpoint Phi_t(x0) and its Jacobian D Phi_t(x0).

    The sensitivity matrix X solves X' = J_f(x) X, X(0) = I, alongside the
    state, with J_f obtained by symbolic differentiation.
    """
    n = f.dim

    def rhs(_t, y):
        x = y[:n]
        X = y[n:].reshape(n, n)
        return np.concatenate([f(x), (f.jacobian_at(x) @ X).ravel()])

    y0 = np.concatenate([np.asarray(x0, dtype=float), np.eye(n).ravel()])
    ts, ys, _ = solve_ode(rhs, 0.0, y0, t, tol)
    end = ys[-1]
    return end[:n], end[n:].reshape(n, n)


def check_commutation(f: VectorField, g: VectorField, x0, t: float, tol: float = 1e-10) -> float:
    """||(Phi_t)_* g (x0) - g(Phi_t(x0))||_2 with Phi the flow of f.

    Vanishes for every t exactly when g is invariant under the flow of f,
    i.e. when [f, g] = 0.
    """
    if f.variables != g.variables:
        raise ValueError("fields live on different variable lists")
    x0 = np.asarray(x0, dtype=float)
    xt, jac = integrate_variational(f, x0, t, tol)
    return float(np.linalg.norm(jac @ g(x0) - g(xt)))


@dataclass(frozen=True)
class MilnorReport:
    n: int
    eps: float
    thetas: np.ndarray
    residuals: np.ndarray

    def periodic(self, threshold: float = 1e-12) -> np.ndarray:
        return self.residuals <= threshold

    def __str__(self):
        lines = [f"milnor map n={self.n} eps={self.eps!r} iterations={2 * self.n}"]
        for th, r in zip(self.thetas, self.residuals):
            lines.append(f"theta={th:.17g} residual={r:.3e}")
        return "\n".join(lines)


def milnor_map(theta: float, n: int, eps: float) -> float:
    return (theta + math.pi / n + eps * math.sin(n * theta) ** 2) % (2 * math.pi)


def milnor_check(n: int, eps: float, thetas: Sequence[float]) -> MilnorReport:
    """Circle distance between theta and its 2n-th iterate under the Milnor map."""
    if n < 1 or eps < 0:
        raise ValueError("need n >= 1 and eps >= 0")
    two_pi = 2 * math.pi
    res = []
    for th0 in thetas:
        th = th0 % two_pi
        for _ in range(2 * n):
            th = milnor_map(th, n, eps)
        d = (th - th0) % two_pi
        res.append(min(d, two_pi - d))
    return MilnorReport(n, eps, np.asarray(thetas, dtype=float), np.asarray(res))
