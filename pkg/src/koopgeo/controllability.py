"""Lie algebra rank condition on sampled points.

Only the finite-dimensional data is computed here: a bracket-generated
basis with provenance words and its pointwise ranks.  The dimension of the
controllable submanifold through a point is estimated by the maximal rank
seen on the sample; the submanifold itself is never constructed.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .fields import ControlAffineSystem, VectorField, lie_bracket

RANK_RTOL = 1e-8
DEFAULT_SAMPLES = 20


# A provenance word is either a generator name or a pair of words.
Word = "str | tuple"


def format_word(word) -> str:
    if isinstance(word, str):
        return word
    return f"[{format_word(word[0])},{format_word(word[1])}]"


def word_length(word) -> int:
    return 1 if isinstance(word, str) else word_length(word[0]) + word_length(word[1])


def generator_fields(sys: ControlAffineSystem) -> list[tuple[str, VectorField]]:
    """Named generators f, g1, ..., gm; identically zero fields are dropped."""
    gens = [("f", sys.drift)] + [(f"g{i + 1}", g) for i, g in enumerate(sys.controls)]
    return [(name, v) for name, v in gens if not v.is_zero]


def field_from_word(word, generators: dict[str, VectorField]) -> VectorField:
    if isinstance(word, str):
        return generators[word]
    return lie_bracket(field_from_word(word[0], generators), field_from_word(word[1], generators))


def numeric_rank(M: np.ndarray, rtol: float = RANK_RTOL) -> tuple[int, np.ndarray]:
    """Rank = #singular values above rtol * max(largest singular value, 1)."""
    if M.size == 0:
        return 0, np.zeros(0)
    sv = np.linalg.svd(M, compute_uv=False)
    cutoff = rtol * max(sv[0] if sv.size else 0.0, 1.0)
    return int(np.sum(sv > cutoff)), sv


@dataclass(frozen=True)
class LieAlgebraBasis:
    fields: tuple[VectorField, ...]
    words: tuple
    depth: int
    saturated: bool
    points: np.ndarray = field(default_factory=lambda: np.zeros((0, 0)))

    def __len__(self):
        return len(self.fields)

    def evaluation_matrix(self, point) -> np.ndarray:
        return np.array([v(point) for v in self.fields]).reshape(len(self.fields), -1)

    def listing(self) -> str:
        return "\n".join(f"  {format_word(w)}: {v}" for w, v in zip(self.words, self.fields))


def larc_rank(basis: LieAlgebraBasis | Sequence[VectorField], point,
              rtol: float = RANK_RTOL) -> tuple[int, np.ndarray]:
    fields = basis.fields if isinstance(basis, LieAlgebraBasis) else tuple(basis)
    if not fields:
        return 0, np.zeros(0)
    M = np.array([v(np.asarray(point, dtype=float)) for v in fields])
    return numeric_rank(M, rtol)


def generate_lie_algebra(sys: ControlAffineSystem, max_depth: int, points,
                         rtol: float = RANK_RTOL) -> LieAlgebraBasis:
    """Breadth-first bracket closure with rank-growth admission.

    Round ``d`` brackets each entry admitted in round ``d - 1`` on the right
    by every generator, in basis order then generator order, and keeps a
    candidate when it raises the rank at some sample point.
    """
    if max_depth < 1:
        raise ValueError("max_depth must be >= 1")
    points = np.atleast_2d(np.asarray(points, dtype=float))
    if points.shape[0] == 0:
        raise ValueError("need at least one sample point")
    n = sys.n
    gens = generator_fields(sys)
    fields: list[VectorField] = []
    words: list = []
    # evaluation rows per point, kept incrementally
    rows = [np.zeros((0, n)) for _ in points]
    ranks = [0] * len(points)

    def admit(v: VectorField, word, force: bool) -> bool:
        vals = [v(p) for p in points]
        new_ranks = [numeric_rank(np.vstack([r, val]), rtol)[0] for r, val in zip(rows, vals)]
        if not force and not any(a > b for a, b in zip(new_ranks, ranks)):
            return False
        for i, val in enumerate(vals):
            rows[i] = np.vstack([rows[i], val])
            ranks[i] = new_ranks[i]
        fields.append(v)
        words.append(word)
        return True

    frontier = []
    for name, v in gens:
        admit(v, name, force=True)
        frontier.append((v, name))
    depth = 1
    saturated = all(r == n for r in ranks)
    while not saturated and depth < max_depth and frontier:
        new_frontier = []
        for v, word in frontier:
            for gname, g in gens:
                cand = lie_bracket(v, g)
                if cand.is_zero:
                    continue
                cword = (word, gname)
                if admit(cand, cword, force=False):
                    new_frontier.append((cand, cword))
        if not new_frontier:
            saturated = True
            break
        depth += 1
        frontier = new_frontier
        saturated = all(r == n for r in ranks)
    if not frontier and not saturated:
        saturated = True
    return LieAlgebraBasis(tuple(fields), tuple(words), depth, saturated, points)


@dataclass(frozen=True)
class RankReport:
    points: np.ndarray
    ranks: tuple[int, ...]
    singular_values: tuple[np.ndarray, ...]
    n: int
    basis: LieAlgebraBasis
    rtol: float = RANK_RTOL
    seed: int | None = None

    @property
    def controllable(self) -> bool:
        return all(r == self.n for r in self.ranks)

    @property
    def dimension(self) -> int:
        """Generic (maximal sampled) rank: estimate of dim of the controllable submanifold."""
        return max(self.ranks) if self.ranks else 0

    @property
    def verdict(self) -> str:
        if self.controllable:
            return "controllable"
        return f"rank-deficient, dim={self.dimension}"

    def render(self) -> str:
        lines = []
        for p, r, sv in zip(self.points, self.ranks, self.singular_values):
            pt = ",".join(format(float(x), ".17g") for x in p)
            svs = ",".join(format(float(s), ".6e") for s in sv)
            lines.append(f"point=({pt}) rank={r} sv=[{svs}]")
        lines.append(f"verdict: {self.verdict}")
        status = "saturated" if self.basis.saturated else "depth cap reached"
        lines.append(f"basis ({len(self.basis)} fields, depth {self.basis.depth}, {status}):")
        lines.append(self.basis.listing())
        return "\n".join(lines)

    __str__ = render


def default_points(sys: ControlAffineSystem, extra=(), samples: int = DEFAULT_SAMPLES,
                   seed: int = 0) -> np.ndarray:
    pts = [np.asarray(p, dtype=float) for p in extra]
    cloud = sys.box.sample(samples, seed)
    if pts:
        return np.vstack([np.array(pts), cloud]) if samples else np.array(pts)
    return cloud


def controllability_verdict(sys: ControlAffineSystem, points=None, max_depth: int | None = None,
                            samples: int = DEFAULT_SAMPLES, seed: int = 0,
                            rtol: float = RANK_RTOL) -> RankReport:
    """LARC at user points plus ``samples`` Halton points of the analysis box."""
    pts = default_points(sys, points if points is not None else (), samples, seed)
    depth = max_depth if max_depth is not None else 2 * sys.n + 1
    basis = generate_lie_algebra(sys, depth, pts, rtol)
    ranks, svs = [], []
    for p in pts:
        r, sv = larc_rank(basis, p, rtol)
        ranks.append(r)
        svs.append(sv)
    return RankReport(pts, tuple(ranks), tuple(svs), sys.n, basis, rtol, seed)
