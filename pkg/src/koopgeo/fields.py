"""Vector fields, control-affine systems and their Lie calculus."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

import numpy as np
from scipy.stats import qmc

from .expr import ONE, ZERO, Expr, ExprError, add, as_polynomial, diff, lambdify, mul, parse_expr

ZERO_TOL = 1e-10
ZERO_SAMPLES = 50


class DimensionError(ExprError, ValueError):
    """Fields or observables do not share a variable list."""


@dataclass(frozen=True)
class Box:
    """Axis-aligned analysis box, one closed interval per state variable."""

    bounds: tuple[tuple[float, float], ...]

    @classmethod
    def unit(cls, n: int) -> "Box":
        return cls(((-1.0, 1.0),) * n)

    def __post_init__(self):
        for lo, hi in self.bounds:
            if not lo <= hi:
                raise ValueError(f"empty interval [{lo}, {hi}]")

    @property
    def lower(self) -> np.ndarray:
        return np.array([b[0] for b in self.bounds], dtype=float)

    @property
    def upper(self) -> np.ndarray:
        return np.array([b[1] for b in self.bounds], dtype=float)

    @property
    def center(self) -> np.ndarray:
        return 0.5 * (self.lower + self.upper)

    def sample(self, count: int, seed: int = 0) -> np.ndarray:
        """Scrambled Halton points in the box, shape ``(count, n)``."""
        n = len(self.bounds)
        if count <= 0:
            return np.zeros((0, n))
        unit = qmc.Halton(d=n, scramble=True, seed=seed).random(count)
        return self.lower + unit * (self.upper - self.lower)

    def grid(self, per_axis: int) -> np.ndarray:
        axes = [np.linspace(lo, hi, per_axis) for lo, hi in self.bounds]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)

    def describe(self, variables: Sequence[str]) -> str:
        return "; ".join(f"{v} in [{lo:g},{hi:g}]" for v, (lo, hi) in zip(variables, self.bounds))


def sup_norm(expr: Expr, variables: Sequence[str], box: Box, seed: int = 0) -> float:
    """Sampled sup-norm of ``expr`` over ``box``.

    Uses the box corners, a regular grid and a Halton cloud; this is a lower
    estimate of the true supremum.
    """
    n = len(variables)
    per_axis = max(2, int(round(4096 ** (1.0 / n))) if n <= 4 else 3)
    pts = np.vstack([box.grid(per_axis), box.sample(1024, seed)])
    vals = lambdify([expr], variables, vectorized=True)(pts.T)[0]
    vals = vals[np.isfinite(vals)]
    return float(np.max(np.abs(vals))) if vals.size else float("inf")


def zero_certificate(expr: Expr, variables: Sequence[str], box: Box | None = None,
                     seed: int = 0) -> str | None:
    """Classify ``expr`` as identically zero.

    Returns ``"symbolic"`` when the canonical form is the constant 0,
    ``"numeric"`` when it evaluates below 1e-10 at 50 Halton points of the
    box, and ``None`` when it is not zero.
    """
    if expr.is_zero:
        return "symbolic"
    if expr.is_const or as_polynomial(expr, variables) is not None:
        # canonical polynomials are zero only if the tree is
        return None
    box = box or Box.unit(len(variables))
    pts = box.sample(ZERO_SAMPLES, seed)
    vals = lambdify([expr], variables, vectorized=True)(pts.T)[0]
    if np.all(np.isfinite(vals)) and np.max(np.abs(vals)) < ZERO_TOL:
        return "numeric"
    return None


@dataclass(frozen=True)
class VectorField:
    """A vector field on a chart of R^n: one expression per coordinate."""

    components: tuple[Expr, ...]
    variables: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "components", tuple(self.components))
        object.__setattr__(self, "variables", tuple(self.variables))
        if len(self.components) != len(self.variables):
            raise DimensionError(
                f"{len(self.components)} components for {len(self.variables)} variables")
        allowed = set(self.variables)
        for c in self.components:
            extra = c.free_variables() - allowed
            if extra:
                raise DimensionError(f"component uses undeclared variable {sorted(extra)[0]!r}")

    @classmethod
    def parse(cls, texts: Sequence[str], variables: Sequence[str]) -> "VectorField":
        return cls(tuple(parse_expr(t, variables) for t in texts), tuple(variables))

    @classmethod
    def zero(cls, variables: Sequence[str]) -> "VectorField":
        return cls((ZERO,) * len(variables), tuple(variables))

    @classmethod
    def coordinate(cls, i: int, variables: Sequence[str]) -> "VectorField":
        comps = [ZERO] * len(variables)
        comps[i] = ONE
        return cls(tuple(comps), tuple(variables))

    @property
    def dim(self) -> int:
        return len(self.components)

    @property
    def is_zero(self) -> bool:
        return all(c.is_zero for c in self.components)

    def scale(self, c) -> "VectorField":
        return VectorField(tuple(mul(c, e) for e in self.components), self.variables)

    def __add__(self, other: "VectorField") -> "VectorField":
        _check_same(self, other)
        return VectorField(tuple(add(a, b) for a, b in zip(self.components, other.components)),
                           self.variables)

    def __neg__(self) -> "VectorField":
        return self.scale(-1)

    @cached_property
    def _fn(self):
        return lambdify(self.components, self.variables)

    def __call__(self, x) -> np.ndarray:
        return self._fn(x)

    @cached_property
    def jacobian(self) -> tuple[tuple[Expr, ...], ...]:
        """Symbolic Jacobian, ``jacobian[i][j] = d f_i / d x_j``."""
        return tuple(tuple(diff(c, v) for v in self.variables) for c in self.components)

    @cached_property
    def _jac_fn(self):
        flat = [e for row in self.jacobian for e in row]
        return lambdify(flat, self.variables)

    def jacobian_at(self, x) -> np.ndarray:
        return self._jac_fn(x).reshape(self.dim, self.dim)

    def is_polynomial(self) -> bool:
        return all(as_polynomial(c, self.variables) is not None for c in self.components)

    def __str__(self):
        return "(" + ", ".join(str(c) for c in self.components) + ")"


def _check_same(f: VectorField, g: VectorField) -> None:
    if f.variables != g.variables:
        raise DimensionError(f"variable lists differ: {f.variables} vs {g.variables}")


@dataclass(frozen=True)
class ControlAffineSystem:
    """dx/dt = f(x) + sum_i u_i g_i(x) on a box chart of R^n."""

    drift: VectorField
    controls: tuple[VectorField, ...] = ()
    box: Box | None = None
    name: str = ""
    observables: tuple[tuple[str, Expr], ...] = field(default=())

    def __post_init__(self):
        object.__setattr__(self, "controls", tuple(self.controls))
        for g in self.controls:
            _check_same(self.drift, g)
        if self.box is None:
            object.__setattr__(self, "box", Box.unit(self.n))
        elif len(self.box.bounds) != self.n:
            raise DimensionError("box dimension does not match the state dimension")

    @classmethod
    def parse(cls, drift: Sequence[str], controls: Sequence[Sequence[str]] = (),
              variables: Sequence[str] = ("x",), box: Box | None = None, name: str = ""):
        return cls(VectorField.parse(drift, variables),
                   tuple(VectorField.parse(g, variables) for g in controls), box, name)

    @property
    def variables(self) -> tuple[str, ...]:
        return self.drift.variables

    @property
    def n(self) -> int:
        return self.drift.dim

    @property
    def m(self) -> int:
        return len(self.controls)

    def unforced(self) -> "ControlAffineSystem":
        return ControlAffineSystem(self.drift, (), self.box, self.name)

    def observable(self, name: str) -> Expr:
        for key, e in self.observables:
            if key == name:
                return e
        raise KeyError(f"no observable named {name!r}")


def lie_derivative(f: VectorField, h: Expr) -> Expr:
    """L_f h = sum_i f_i dh/dx_i."""
    extra = h.free_variables() - set(f.variables)
    if extra:
        raise DimensionError(f"observable uses variable {sorted(extra)[0]!r} not in the field")
    return add(*[mul(fi, diff(h, x)) for fi, x in zip(f.components, f.variables) if not fi.is_zero])


def iterated_lie_derivative(f: VectorField, h: Expr, k: int) -> Expr:
    if k < 0:
        raise ValueError("k must be nonnegative")
    for _ in range(k):
        h = lie_derivative(f, h)
    return h


def lie_bracket(f: VectorField, g: VectorField) -> VectorField:
    """[f, g]_i = sum_j (f_j dg_i/dx_j - g_j df_i/dx_j), so L_[f,g] = L_f L_g - L_g L_f."""
    _check_same(f, g)
    comps = []
    for fi, gi in zip(f.components, g.components):
        comps.append(add(lie_derivative(f, gi), mul(-1, lie_derivative(g, fi))))
    return VectorField(tuple(comps), f.variables)
