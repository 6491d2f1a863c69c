"""Rational programs, constraint sets and sparsity patterns.

A :class:`RationalProgram` describes

    minimize (or maximize)  sum_i p_i(x) / q_i(x)   subject to  g_j(x) >= 0 (or == 0).

Variable indices are 0-based throughout the library; only user-facing text
(problem files, reports) uses 1-based names.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import ModelingError
from .polyalg import Polynomial, VariableScaling, apply_scaling

GEQ = ">="
EQ = "=="


@dataclass(frozen=True)
class RationalTerm:
    numerator: Polynomial
    denominator: Polynomial

    def __post_init__(self):
        if self.numerator.dimension != self.denominator.dimension:
            raise ModelingError("numerator and denominator dimensions differ")
        if self.denominator.is_zero():
            raise ModelingError("denominator is the zero polynomial")

    @property
    def support(self) -> frozenset:
        return self.numerator.support | self.denominator.support

    @property
    def dimension(self) -> int:
        return self.numerator.dimension

    def __call__(self, x) -> float:
        return self.numerator(x) / self.denominator(x)


@dataclass(frozen=True)
class ConstraintPoly:
    g: Polynomial
    relation: str = GEQ
    origin: str = "user"  # user | ball | epigraph-bound | bound

    def __post_init__(self):
        if self.relation not in (GEQ, EQ):
            raise ModelingError(f"unknown relation {self.relation!r}")

    @property
    def is_equality(self) -> bool:
        return self.relation == EQ

    def violation(self, x) -> float:
        v = self.g(x)
        return abs(v) if self.is_equality else max(0.0, -v)


@dataclass(frozen=True)
class SparsityPattern:
    """Cliques ``I_i`` (one per term) and constraint assignment ``J_i``."""

    cliques: tuple
    assignment: tuple

    def __post_init__(self):
        object.__setattr__(self, "cliques",
                           tuple(tuple(sorted(set(int(v) for v in c))) for c in self.cliques))
        object.__setattr__(self, "assignment",
                           tuple(tuple(sorted(int(j) for j in a)) for a in self.assignment))
        if len(self.cliques) != len(self.assignment):
            raise ModelingError("need one constraint group per clique")

    @property
    def size(self) -> int:
        return len(self.cliques)

    def overlaps(self, i: int) -> list:
        """``U_i``: later cliques sharing a variable with clique ``i``."""
        ci = set(self.cliques[i])
        return [j for j in range(i + 1, self.size) if ci & set(self.cliques[j])]

    def validate(self, program: "RationalProgram") -> None:
        n, N, m = program.n, len(program.terms), len(program.constraints)
        if self.size != N:
            raise ModelingError(f"pattern has {self.size} cliques for {N} terms")
        covered = set()
        for i, c in enumerate(self.cliques):
            if not c:
                raise ModelingError(f"clique {i} is empty")
            if c[0] < 0 or c[-1] >= n:
                raise ModelingError(f"clique {i} references a variable outside 0..{n - 1}")
            covered.update(c)
            if not program.terms[i].support <= set(c):
                raise ModelingError(f"term {i} is not supported on clique {i}")
        if covered != set(range(n)):
            raise ModelingError(f"cliques miss variables {sorted(set(range(n)) - covered)}")
        seen: list = []
        for i, group in enumerate(self.assignment):
            for j in group:
                if not 0 <= j < m:
                    raise ModelingError(f"constraint index {j} out of range")
                if not program.constraints[j].g.support <= set(self.cliques[i]):
                    raise ModelingError(f"constraint {j} is not supported on clique {i}")
            seen.extend(group)
        if sorted(seen) != list(range(m)):
            raise ModelingError("constraint groups must partition all constraint indices")


@dataclass(frozen=True)
class RationalProgram:
    n: int
    terms: tuple
    constraints: tuple = ()
    sense: str = "minimize"
    pattern: SparsityPattern | None = None
    scaling: VariableScaling | None = None
    names: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "terms", tuple(self.terms))
        object.__setattr__(self, "constraints", tuple(self.constraints))
        if not self.names:
            object.__setattr__(self, "names", tuple(f"x{j + 1}" for j in range(self.n)))
        if len(self.terms) < 1:
            raise ModelingError("a rational program needs at least one term")
        if self.sense not in ("minimize", "maximize"):
            raise ModelingError(f"unknown sense {self.sense!r}")
        for t in self.terms:
            if t.dimension != self.n:
                raise ModelingError("term dimension differs from program dimension")
        for c in self.constraints:
            if c.g.dimension != self.n:
                raise ModelingError("constraint dimension differs from program dimension")
        if self.pattern is not None:
            self.pattern.validate(self)

    def replace(self, **changes) -> "RationalProgram":
        return dataclasses.replace(self, **changes)

    def objective(self, x) -> float:
        return float(sum(t(x) for t in self.terms))

    def max_violation(self, x) -> float:
        return max((c.violation(x) for c in self.constraints), default=0.0)

    def feasible(self, x, tol: float = 1e-6) -> bool:
        return self.max_violation(x) <= tol


def check_rip(pattern: SparsityPattern):
    """Running intersection property check.

    Returns ``None`` when it holds, otherwise the smallest violating clique
    index ``i`` (0-based) for which no earlier clique contains
    ``I_i ∩ (I_0 ∪ ... ∪ I_{i-1})``.
    """
    union: set = set()
    for i, clique in enumerate(pattern.cliques):
        c = set(clique)
        if not c:
            raise ModelingError(f"clique {i} is empty")
        if i > 0:
            inter = c & union
            if not any(inter <= set(pattern.cliques[j]) for j in range(i)):
                return i
        union |= c
    return None


def infer_cliques(program: RationalProgram) -> SparsityPattern:
    """Term supports as cliques; constraints go to the first clique that holds them."""
    cliques = [set(t.support) or {0} for t in program.terms]
    assignment: list = [[] for _ in cliques]
    for j, con in enumerate(program.constraints):
        supp = set(con.g.support)
        home = next((i for i, c in enumerate(cliques) if supp <= c), None)
        if home is None:
            # grow the clique whose union with the support is smallest
            home = min(range(len(cliques)), key=lambda i: (len(cliques[i] | supp), i))
            cliques[home] |= supp
        assignment[home].append(j)
    missing = set(range(program.n)) - set().union(*cliques)
    if missing:
        cliques[0] |= missing
    return SparsityPattern(tuple(cliques), tuple(assignment))


def add_ball_constraints(program: RationalProgram, radius_sq: float,
                         mode: str = "dense") -> RationalProgram:
    """Append ``M - ||x||^2 >= 0`` (dense) or one ``M - sum_{k in I_i} x_k^2`` per clique."""
    if radius_sq <= 0:
        raise ModelingError(f"ball constant M must be positive, got {radius_sq}")
    n = program.n
    sq = [Polynomial.variable(n, j) ** 2 for j in range(n)]
    cons = list(program.constraints)
    if mode == "dense":
        g = Polynomial.constant(n, radius_sq) - sum(sq, Polynomial.zero(n))
        cons.append(ConstraintPoly(g, GEQ, "ball"))
        pattern = program.pattern
        if pattern is not None:
            # the dense ball couples everything; only the first clique can hold it if it is global
            raise ModelingError("dense ball constraint is incompatible with a sparsity pattern")
        return program.replace(constraints=tuple(cons))
    if mode != "per-clique":
        raise ModelingError(f"unknown ball mode {mode!r}")
    if program.pattern is None:
        raise ModelingError("per-clique ball constraints need a sparsity pattern")
    pattern = program.pattern
    groups = [list(a) for a in pattern.assignment]
    for i, clique in enumerate(pattern.cliques):
        g = Polynomial.constant(n, radius_sq) - sum((sq[k] for k in clique), Polynomial.zero(n))
        groups[i].append(len(cons))
        cons.append(ConstraintPoly(g, GEQ, "ball"))
    new_pattern = SparsityPattern(pattern.cliques, tuple(tuple(g) for g in groups))
    return program.replace(constraints=tuple(cons), pattern=new_pattern)


@dataclass
class DenominatorReport:
    verdict: str  # ok | suspect | inconclusive
    min_values: list = field(default_factory=list)
    feasible_samples: int = 0
    note: str = ("sampling screen only: a positive minimum does not prove "
                 "q_i > 0 on the feasible set")


def validate_denominators(program: RationalProgram, sample_count: int = 2000,
                          box: Sequence | None = None, seed: int = 0) -> DenominatorReport:
    """Sample the box, keep points satisfying every inequality, evaluate each q_i."""
    if sample_count < 1:
        raise ValueError("sample_count must be >= 1")
    n = program.n
    if box is None:
        box = [(-1.0, 1.0)] * n
    lo = np.array([b[0] for b in box], dtype=float)
    hi = np.array([b[1] for b in box], dtype=float)
    if lo.shape[0] != n or not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
        raise ModelingError("box must give finite bounds for every variable")
    rng = np.random.default_rng(seed)
    pts = lo + (hi - lo) * rng.random((sample_count, n))
    ineqs = [c for c in program.constraints if not c.is_equality]
    mins = [np.inf] * len(program.terms)
    kept = 0
    for x in pts:
        if any(c.g(x) < 0 for c in ineqs):
            continue
        kept += 1
        for i, t in enumerate(program.terms):
            mins[i] = min(mins[i], t.denominator(x))
    if kept == 0:
        return DenominatorReport("inconclusive", [], 0)
    verdict = "suspect" if any(v <= 0 for v in mins) else "ok"
    return DenominatorReport(verdict, [float(v) for v in mins], kept)


def scale_program(program: RationalProgram, scaling: VariableScaling) -> RationalProgram:
    """Rewrite every polynomial in the scaled variables ``z`` with ``x = a*z + b``."""
    terms = tuple(RationalTerm(apply_scaling(t.numerator, scaling),
                               apply_scaling(t.denominator, scaling)) for t in program.terms)
    cons = tuple(ConstraintPoly(apply_scaling(c.g, scaling), c.relation, c.origin)
                 for c in program.constraints)
    return program.replace(terms=terms, constraints=cons, scaling=scaling)


def negated(program: RationalProgram) -> RationalProgram:
    """Flip the sense by negating numerators (used by the epigraph builder)."""
    terms = tuple(RationalTerm(-t.numerator, t.denominator) for t in program.terms)
    sense = "minimize" if program.sense == "maximize" else "maximize"
    return program.replace(terms=terms, sense=sense)
