"""Bilinear Koopman lifts on finite observable dictionaries.

Convention: observables stack as a column ``z = Psi(x)`` and every generator
matrix ``L`` acts as ``dz/dt = L z``.  Row ``k`` of ``L`` holds the
coefficients of ``L_v psi_k`` in the dictionary, so ``L`` is the transpose
of the matrix of the Lie derivative acting on coefficient vectors of
functions.
"""

from __future__ import annotations

import itertools
import math
import warnings
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

import numpy as np

from .expr import Expr, as_polynomial, from_polynomial, lambdify, monomial
from .fields import Box, ControlAffineSystem, VectorField, lie_derivative, sup_norm
from .numerics import ControlSignal, Trajectory, _piecewise_solve, integrate_flow

MAX_DICTIONARY = 100_000
CONDITION_WARNING = 1e8


class DictionaryTooLarge(ValueError):
    pass


class LiftError(ValueError):
    pass


@dataclass(frozen=True)
class ObservableDictionary:
    observables: tuple[Expr, ...]
    variables: tuple[str, ...]
    degrees: tuple[int | None, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "observables", tuple(self.observables))
        object.__setattr__(self, "variables", tuple(self.variables))
        if not self.observables:
            raise ValueError("a dictionary needs at least one observable")
        if len(set(self.observables)) != len(self.observables):
            raise ValueError("dictionary entries must be distinct")
        if not self.degrees:
            degs = []
            for psi in self.observables:
                poly = as_polynomial(psi, self.variables)
                degs.append(max((sum(e) for e in poly), default=0) if poly is not None else None)
            object.__setattr__(self, "degrees", tuple(degs))

    def __len__(self):
        return len(self.observables)

    def __iter__(self):
        return iter(self.observables)

    def __getitem__(self, i):
        return self.observables[i]

    def evaluate(self, x) -> np.ndarray:
        """Psi(x) as a K-vector (or ``K x P`` for a ``n x P`` batch)."""
        return lambdify(self.observables, self.variables, vectorized=np.ndim(x) > 1)(x)

    def __str__(self):
        return ", ".join(str(p) for p in self.observables)


def default_variables(n: int) -> tuple[str, ...]:
    return ("x",) if n == 1 else tuple(f"x{i + 1}" for i in range(n))


def build_monomial_dictionary(n: int, d: int, variables: Sequence[str] | None = None
                              ) -> ObservableDictionary:
    """All monomials of total degree <= d, graded lexicographic order."""
    if n < 1 or d < 0:
        raise ValueError("need n >= 1 and d >= 0")
    size = math.comb(n + d, d)
    if size > MAX_DICTIONARY:
        raise DictionaryTooLarge(f"dictionary would have {size} > {MAX_DICTIONARY} entries")
    variables = tuple(variables) if variables is not None else default_variables(n)
    if len(variables) != n:
        raise ValueError("variable count does not match n")
    obs, degs = [], []
    for deg in range(d + 1):
        for combo in itertools.combinations_with_replacement(range(n), deg):
            expo = [0] * n
            for i in combo:
                expo[i] += 1
            obs.append(monomial(expo, variables))
            degs.append(deg)
    return ObservableDictionary(tuple(obs), variables, tuple(degs))


@dataclass(frozen=True)
class GeneratorMatrix:
    """Matrix of L_v on a dictionary plus the per-row closure defect.

    ``remainders[k]`` is the exact polynomial left over after matching
    ``L_v psi_k`` against the dictionary (``None`` on the projected branch)
    and ``residuals[k]`` its sampled sup-norm on the box, or the RMS fit
    error when ``projected``.
    """

    matrix: np.ndarray
    residuals: np.ndarray
    remainders: tuple[Expr | None, ...]
    projected: bool = False

    def __iter__(self):
        yield self.matrix
        yield self.residuals

    @property
    def exact(self) -> bool:
        return not self.projected and all(r is not None and r.is_zero for r in self.remainders)


class _SpanReducer:
    """Exact reduction of polynomials against the span of dictionary polynomials."""

    def __init__(self, polys: Sequence[dict]):
        self.K = len(polys)
        self.monomial_only = all(len(p) == 1 and next(iter(p.values())) == 1 for p in polys)
        if self.monomial_only:
            self.index = {next(iter(p)): k for k, p in enumerate(polys)}
            return
        # row echelon form with a record of which originals each row combines
        self.rows: list[tuple[tuple, dict, list[Fraction]]] = []
        for k, p in enumerate(polys):
            vec = dict(p)
            combo = [Fraction(0)] * self.K
            combo[k] = Fraction(1)
            for pivot, rvec, rcombo in self.rows:
                c = vec.get(pivot)
                if c:
                    vec = _axpy(vec, -c, rvec)
                    combo = [a - c * b for a, b in zip(combo, rcombo)]
            if not vec:
                continue
            pivot = max(vec, key=lambda e: (sum(e), e))
            c = vec[pivot]
            vec = {e: v / c for e, v in vec.items()}
            combo = [a / c for a in combo]
            # keep previous rows reduced in this pivot
            new_rows = []
            for rp, rvec, rcombo in self.rows:
                cc = rvec.get(pivot)
                if cc:
                    rvec = _axpy(rvec, -cc, vec)
                    rcombo = [a - cc * b for a, b in zip(rcombo, combo)]
                new_rows.append((rp, rvec, rcombo))
            new_rows.append((pivot, vec, combo))
            self.rows = new_rows

    def reduce(self, poly: dict) -> tuple[list[Fraction], dict]:
        coeffs = [Fraction(0)] * self.K
        if self.monomial_only:
            rest = {}
            for e, c in poly.items():
                k = self.index.get(e)
                if k is None:
                    rest[e] = c
                else:
                    coeffs[k] += c
            return coeffs, rest
        vec = dict(poly)
        for pivot, rvec, rcombo in self.rows:
            c = vec.get(pivot)
            if c:
                vec = _axpy(vec, -c, rvec)
                coeffs = [a + c * b for a, b in zip(coeffs, rcombo)]
        return coeffs, vec


def _axpy(x: dict, a: Fraction, y: dict) -> dict:
    out = dict(x)
    for e, v in y.items():
        out[e] = out.get(e, Fraction(0)) + a * v
        if out[e] == 0:
            del out[e]
    return out


def generator_matrix(v: VectorField, dictionary: ObservableDictionary, box: Box | None = None,
                     seed: int = 0, allow_projection: bool = True) -> GeneratorMatrix:
    """Represent L_v on ``dictionary`` so that d/dt Psi = L Psi (+ closure defect).

    Polynomial fields over polynomial dictionaries are matched exactly on
    coefficients.  Anything else is projected by least squares on ``10 K``
    Halton points of ``box``; a box is then required.
    """
    if v.variables != dictionary.variables:
        raise LiftError("field and dictionary use different variables")
    K = len(dictionary)
    derivs = [lie_derivative(v, psi) for psi in dictionary]
    dict_polys = [as_polynomial(p, v.variables) for p in dictionary]
    deriv_polys = [as_polynomial(d, v.variables) for d in derivs]
    if all(p is not None for p in dict_polys) and all(p is not None for p in deriv_polys):
        reducer = _SpanReducer(dict_polys)
        L = np.zeros((K, K))
        remainders, residuals = [], []
        check_box = box or Box.unit(len(v.variables))
        for k, poly in enumerate(deriv_polys):
            coeffs, rest = reducer.reduce(poly)
            L[k] = [float(c) for c in coeffs]
            r = from_polynomial(rest, v.variables)
            remainders.append(r)
            residuals.append(0.0 if r.is_zero else sup_norm(r, v.variables, check_box, seed))
        return GeneratorMatrix(L, np.array(residuals), tuple(remainders), projected=False)
    if not allow_projection or box is None:
        raise LiftError("non-polynomial lift requires an analysis box for projection")
    pts = box.sample(10 * K, seed)
    Psi = dictionary.evaluate(pts.T).T  # P x K
    Y = lambdify(derivs, v.variables, vectorized=True)(pts.T).T  # P x K
    cond = np.linalg.cond(Psi)
    if cond > CONDITION_WARNING:
        warnings.warn(f"projection is ill-conditioned (cond = {cond:.3g})", RuntimeWarning,
                      stacklevel=2)
    C, *_ = np.linalg.lstsq(Psi, Y, rcond=None)
    fit = Psi @ C - Y
    rms = np.sqrt(np.mean(fit**2, axis=0))
    return GeneratorMatrix(C.T.copy(), rms, (None,) * K, projected=True)


@dataclass(frozen=True)
class LiftedBilinearSystem:
    """dz/dt = (A + sum_i u_i N_i) z on the span of a dictionary."""

    A: np.ndarray
    N: tuple[np.ndarray, ...]
    residuals: np.ndarray  # (1 + m) x K, drift row first
    dictionary: ObservableDictionary
    box: Box
    projected: bool = False
    exact: bool = False

    @property
    def K(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return len(self.N)

    def generator(self, u) -> np.ndarray:
        L = self.A.copy()
        for ui, Ni in zip(u, self.N):
            L += ui * Ni
        return L

    def export(self) -> str:
        return export_matrices(self.A, self.N)


def bilinearize(sys: ControlAffineSystem, dictionary: ObservableDictionary,
                box: Box | None = None, seed: int = 0) -> LiftedBilinearSystem:
    box = box or sys.box
    gens = [generator_matrix(sys.drift, dictionary, box, seed)]
    gens += [generator_matrix(g, dictionary, box, seed) for g in sys.controls]
    return LiftedBilinearSystem(
        A=gens[0].matrix,
        N=tuple(g.matrix for g in gens[1:]),
        residuals=np.vstack([g.residuals for g in gens]),
        dictionary=dictionary,
        box=box,
        projected=any(g.projected for g in gens),
        exact=all(g.exact for g in gens),
    )


def simulate_lift(lifted: LiftedBilinearSystem, u: ControlSignal | None, z0, t_end: float,
                  tol: float = 1e-9, stops: Sequence[float] = ()) -> Trajectory:
    z0 = np.asarray(z0, dtype=float)
    if z0.shape != (lifted.K,):
        raise ValueError(f"z0 must have length {lifted.K}")
    if u is not None and u.m != lifted.m:
        raise ValueError(f"control signal has {u.m} channels, lift has {lifted.m}")

    def make_rhs(held):
        if held is not None:
            L = lifted.generator(held)
            return lambda t, z: L @ z
        if u is None or lifted.m == 0:
            return lambda t, z: lifted.A @ z
        return lambda t, z: lifted.generator(u(t)) @ z

    return _piecewise_solve(make_rhs, u, z0, t_end, tol, stops=stops)


@dataclass(frozen=True)
class LiftComparison:
    times: np.ndarray
    true_psi: np.ndarray  # T x K
    lifted_z: np.ndarray  # T x K

    @property
    def errors(self) -> np.ndarray:
        return np.max(np.abs(self.true_psi - self.lifted_z), axis=1)

    @property
    def sup_error(self) -> float:
        return float(np.max(self.errors))


def compare_lift(sys: ControlAffineSystem, dictionary: ObservableDictionary,
                 u: ControlSignal | None, x0, t_end: float, tol: float = 1e-9,
                 lifted: LiftedBilinearSystem | None = None, samples: int = 101) -> LiftComparison:
    """Psi(Phi_t(x0)) against the lifted solution z(t), z(0) = Psi(x0), on a time grid."""
    lifted = lifted or bilinearize(sys, dictionary)
    grid = np.linspace(0.0, t_end, samples) if t_end != 0 else np.array([0.0])
    x0 = np.asarray(x0, dtype=float)
    true_traj = integrate_flow(sys, u, x0, t_end, tol, stops=grid)
    z_traj = simulate_lift(lifted, u, dictionary.evaluate(x0), t_end, tol, stops=grid)
    xs = true_traj.sample(grid)
    psi = dictionary.evaluate(xs.T).T if len(grid) > 1 else dictionary.evaluate(xs[0])[None, :]
    return LiftComparison(grid, psi, z_traj.sample(grid))


def lift_error(sys: ControlAffineSystem, dictionary: ObservableDictionary,
               u: ControlSignal | None, x0, t_end: float, tol: float = 1e-9,
               lifted: LiftedBilinearSystem | None = None) -> float:
    """max_t ||Psi(Phi_t(x0)) - z(t)||_inf."""
    return compare_lift(sys, dictionary, u, x0, t_end, tol, lifted).sup_error


# Padé coefficients for the [8/8] diagonal approximant of exp
_PADE_Q = 8
_PADE = [math.factorial(2 * _PADE_Q - k) * math.factorial(_PADE_Q)
         / (math.factorial(2 * _PADE_Q) * math.factorial(k) * math.factorial(_PADE_Q - k))
         for k in range(_PADE_Q + 1)]


def exp_generator(L, t: float = 1.0) -> np.ndarray:
    """exp(t L) by scaling and squaring with an [8/8] Padé approximant."""
    M = t * np.asarray(L, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError("expected a square matrix")
    if not np.all(np.isfinite(M)):
        raise ValueError("matrix has non-finite entries")
    n = M.shape[0]
    eye = np.eye(n)
    norm = np.linalg.norm(M, 1)
    s = max(0, int(math.ceil(math.log2(norm / 0.5)))) if norm > 0.5 else 0
    M = M / 2.0**s
    num = _PADE[0] * eye
    den = _PADE[0] * eye
    P = eye
    for k in range(1, _PADE_Q + 1):
        P = P @ M
        num = num + _PADE[k] * P
        den = den + (-1) ** k * _PADE[k] * P
    E = np.linalg.solve(den, num)
    for _ in range(s):
        E = E @ E
    return E


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def export_matrices(A, N: Sequence = ()) -> str:
    """Plain-text export: 'K m', then A row-major, then each N_i row-major."""
    A = np.asarray(A)
    lines = [f"{A.shape[0]} {len(N)}"]
    for M in (A, *N):
        for row in np.asarray(M):
            lines.append(" ".join(_fmt(x) for x in row))
    return "\n".join(lines) + "\n"


def read_matrices(text: str) -> tuple[np.ndarray, list[np.ndarray]]:
    """Inverse of :func:`export_matrices`; '#' comment lines are skipped."""
    rows = [ln.split() for ln in text.splitlines() if ln.strip() and not ln.lstrip().startswith("#")]
    K, m = (int(v) for v in rows[0])
    data = np.array([[float(v) for v in r] for r in rows[1:1 + K * (m + 1)]])
    if data.shape != (K * (m + 1), K):
        raise ValueError("matrix block has the wrong shape")
    return data[:K], [data[K * (i + 1):K * (i + 2)] for i in range(m)]
