"""Moment relaxations of rational programs.

Each relaxation stacks one truncated moment sequence per measure into a
single vector ``y`` and packages the PSD and linear constraints as an
:class:`~ratgmp.sdpcore.SDPProblem`.

* :func:`build_dense`: one measure per term (terms sharing a denominator
  share a measure), all over the full variable set.
* :func:`build_sparse`: one measure per clique with private moment copies of
  the overlap variables, glued by q-weighted linking equalities.
* :func:`build_epigraph`: the polynomial program obtained by lifting each term
  to ``r_i``, relaxed with the dense or sparse builder.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import ModelingError, OrderError, RipWarning
from .gmp import (EQ, GEQ, ConstraintPoly, RationalProgram, RationalTerm, SparsityPattern,
                  check_rip)
from .polyalg import Polynomial, add_monomials, monomial_index, monomials_up_to
from .sdpcore import Block, SDPProblem


def _half_up(d: int) -> int:
    return (d + 1) // 2


def min_order(program: RationalProgram) -> int:
    """Smallest ``k`` with ``2k`` at least every numerator, denominator and constraint degree."""
    degs = [t.numerator.degree for t in program.terms]
    degs += [t.denominator.degree for t in program.terms]
    degs += [c.g.degree for c in program.constraints]
    return _half_up(max(degs, default=0))


@dataclass(frozen=True)
class Measure:
    """One moment sequence of a relaxation, in local coordinates.

    ``variables`` are the global indices of the local coordinates; ``numerator``
    and ``denominator`` are written in the local coordinates; ``constraints``
    holds global constraint indices localized on this measure; ``flat_offset``
    is the rank-test offset (u_i dense, v_i sparse).
    """

    index: int
    variables: tuple
    numerator: Polynomial
    denominator: Polynomial
    terms: tuple
    constraints: tuple
    flat_offset: int

    @property
    def dimension(self) -> int:
        return len(self.variables)


class MomentIndexing:
    """Maps (measure, local monomial) to a position of the stacked vector ``y``."""

    def __init__(self, dims, order: int):
        self.dims = tuple(int(d) for d in dims)
        self.order = int(order)
        self.offsets = []
        total = 0
        for n in self.dims:
            self.offsets.append(total)
            total += math.comb(n + 2 * order, n)
        self.size = total

    def basis(self, i: int) -> tuple:
        return monomials_up_to(self.dims[i], 2 * self.order)

    def index(self, i: int, mono) -> int:
        return self.offsets[i] + monomial_index(self.dims[i], 2 * self.order)[tuple(mono)]

    def span(self, i: int) -> slice:
        return slice(self.offsets[i], self.offsets[i] + len(self.basis(i)))

    def moments(self, y, i: int) -> dict:
        vals = np.asarray(y)[self.span(i)]
        return dict(zip(self.basis(i), vals))


@dataclass(frozen=True)
class BlockInfo:
    label: str
    measure: int
    constraint: int | None   # None for a moment matrix
    degree: int              # half-degree d of the monomial basis indexing the block


@dataclass(frozen=True)
class EqualityInfo:
    label: str
    kind: str                # normalize | match | link | localize
    measures: tuple
    monomial: tuple | None


@dataclass
class SDPRelaxation:
    kind: str                # dense | sparse
    order: int
    program: RationalProgram
    problem: SDPProblem
    indexing: MomentIndexing
    measures: list
    blocks: list
    equalities: list
    sign: float = 1.0        # -1 when the program maximizes
    notes: list = field(default_factory=list)

    def bound(self, objective: float) -> float:
        """Relaxation value in the program's own sense."""
        return self.sign * objective

    def moment_matrix(self, y, i: int, d: int | None = None) -> np.ndarray:
        d = self.order if d is None else d
        n = self.indexing.dims[i]
        rows = monomials_up_to(n, d)
        mom = self.indexing.moments(y, i)
        return np.array([[mom[add_monomials(a, b)] for b in rows] for a in rows])

    def block_summary(self) -> list:
        """``(label, size)`` for every PSD block in build order."""
        return [(info.label, blk.size) for info, blk in zip(self.blocks, self.problem.blocks)]


def _linear_form(indexing, i, poly: Polynomial, shift=None):
    """Coefficients of L_{y_i}(x^shift * poly) as ``{var: coef}``."""
    out: dict = {}
    for m, c in poly.items():
        mm = m if shift is None else add_monomials(m, shift)
        v = indexing.index(i, mm)
        out[v] = out.get(v, 0.0) + c
    return out


def _moment_block(indexing, i, d, label):
    n = indexing.dims[i]
    rows = monomials_up_to(n, d)
    entries = []
    for a in range(len(rows)):
        for b in range(a, len(rows)):
            entries.append((indexing.index(i, add_monomials(rows[a], rows[b])), a, b, 1.0))
    return Block.from_entries(len(rows), entries, label=label)


def _localizing_block(indexing, i, g: Polynomial, d, label):
    n = indexing.dims[i]
    rows = monomials_up_to(n, d)
    entries = []
    for a in range(len(rows)):
        for b in range(a, len(rows)):
            shift = add_monomials(rows[a], rows[b])
            for m, c in g.items():
                entries.append((indexing.index(i, add_monomials(m, shift)), a, b, c))
    return Block.from_entries(len(rows), entries, label=label)


class _Builder:
    def __init__(self, indexing):
        self.indexing = indexing
        self.blocks = []
        self.block_info = []
        self.eq_rows = []   # list of ({var: coef}, rhs)
        self.eq_info = []

    def add_block(self, blk, info):
        self.blocks.append(blk)
        self.block_info.append(info)

    def add_equality(self, coefs: dict, rhs: float, info: EqualityInfo):
        coefs = {v: c for v, c in coefs.items() if c != 0.0}
        if not coefs:
            if abs(rhs) > 0:
                raise ModelingError(f"equality {info.label} has no variables but rhs {rhs}")
            return
        self.eq_rows.append((coefs, rhs))
        self.eq_info.append(info)

    def add_constraint_rows(self, i, con: ConstraintPoly, ci: int, g_local: Polynomial, k: int):
        """Localizing block for an inequality, localizing equalities for an equality."""
        if con.relation == GEQ:
            d = k - _half_up(g_local.degree)
            if d < 0:
                return
            self.add_block(_localizing_block(self.indexing, i, g_local, d, f"loc[{i},{ci}]"),
                           BlockInfo(f"loc[{i},{ci}]", i, ci, d))
        else:
            cap = 2 * k - g_local.degree
            for a in monomials_up_to(self.indexing.dims[i], cap) if cap >= 0 else ():
                self.add_equality(_linear_form(self.indexing, i, g_local, a), 0.0,
                                  EqualityInfo(f"eq[{i},{ci},{a}]", "localize", (i,), a))

    def problem(self, c):
        rows, cols, vals, rhs = [], [], [], []
        for r, (coefs, b) in enumerate(self.eq_rows):
            for v in sorted(coefs):
                rows.append(r)
                cols.append(v)
                vals.append(coefs[v])
            rhs.append(b)
        return SDPProblem(self.indexing.size, c, self.blocks,
                          np.array(rows, dtype=np.int64), np.array(cols, dtype=np.int64),
                          np.array(vals, dtype=float), np.array(rhs, dtype=float),
                          [e.label for e in self.eq_info])


def _check_order(program, k):
    kmin = min_order(program)
    if k < kmin:
        raise OrderError(f"order {k} is below the minimum admissible order {kmin}")


def _objective(indexing, measures, sign):
    c = np.zeros(indexing.size)
    for mz in measures:
        for v, coef in _linear_form(indexing, mz.index, mz.numerator).items():
            c[v] += sign * coef
    return c


def build_dense(program: RationalProgram, k: int, match_degree: int | None = None,
                merge: bool = True) -> SDPRelaxation:
    """Order-``k`` dense relaxation with one measure per distinct denominator.

    Measures are sorted by ``u_i = ceil(deg q_i / 2)``; the first carries the
    normalization ``L(q) = 1``. Matching equalities use ``|alpha| <= 2(k - u_i)``,
    further capped by ``match_degree`` when given.
    """
    if not program.terms:
        raise ModelingError("no terms")
    _check_order(program, k)
    n = program.n
    groups: dict = {}
    order = []
    for ti, t in enumerate(program.terms):
        key = t.denominator if merge else ti
        if key not in groups:
            groups[key] = []
            order.append(key)
        groups[key].append(ti)
    keyed = sorted(order, key=lambda key: _half_up(program.terms[groups[key][0]].denominator.degree))
    measures = []
    cons = tuple(range(len(program.constraints)))
    for i, key in enumerate(keyed):
        tis = tuple(groups[key])
        q = program.terms[tis[0]].denominator
        p = sum((program.terms[t].numerator for t in tis), Polynomial.zero(n))
        measures.append(Measure(i, tuple(range(n)), p, q, tis, cons, _half_up(q.degree)))
    indexing = MomentIndexing([n] * len(measures), k)
    bld = _Builder(indexing)
    for mz in measures:
        i = mz.index
        bld.add_block(_moment_block(indexing, i, k, f"moment[{i}]"),
                      BlockInfo(f"moment[{i}]", i, None, k))
        for ci, con in enumerate(program.constraints):
            bld.add_constraint_rows(i, con, ci, con.g, k)
    first = measures[0]
    bld.add_equality(_linear_form(indexing, 0, first.denominator), 1.0,
                     EqualityInfo("normalize[0]", "normalize", (0,), None))
    for mz in measures[1:]:
        i = mz.index
        cap = 2 * (k - mz.flat_offset)
        if match_degree is not None:
            cap = min(cap, match_degree,
                      2 * k - max(first.denominator.degree, mz.denominator.degree))
        for a in monomials_up_to(n, cap) if cap >= 0 else ():
            coefs = _linear_form(indexing, i, mz.denominator, a)
            for v, cv in _linear_form(indexing, 0, first.denominator, a).items():
                coefs[v] = coefs.get(v, 0.0) - cv
            bld.add_equality(coefs, 0.0, EqualityInfo(f"match[{i},{a}]", "match", (0, i), a))
    sign = -1.0 if program.sense == "maximize" else 1.0
    prob = bld.problem(_objective(indexing, measures, sign))
    return SDPRelaxation("dense", k, program, prob, indexing, measures, bld.block_info,
                         bld.eq_info, sign)


def build_sparse(program: RationalProgram, pattern: SparsityPattern | None, k: int,
                 match_degree: int | None = None) -> SDPRelaxation:
    """Order-``k`` sparse relaxation: one measure per clique ``I_i``.

    Linking equalities ``L_{y_i}(x^a q_i) = L_{y_j}(x^a q_j)`` run over
    ``j in U_i`` and monomials ``a`` in the overlap variables with
    ``|a| + max(deg q_i, deg q_j) <= 2k``.
    """
    pattern = pattern if pattern is not None else program.pattern
    if pattern is None:
        raise ModelingError("sparse relaxation needs a sparsity pattern")
    pattern.validate(program)
    _check_order(program, k)
    bad = check_rip(pattern)
    notes = []
    if bad is not None:
        msg = f"cliques violate the running intersection property at clique {bad + 1}"
        warnings.warn(msg, RipWarning, stacklevel=2)
        notes.append(msg)
    measures = []
    for i, (clique, group) in enumerate(zip(pattern.cliques, pattern.assignment)):
        t = program.terms[i]
        v = max([_half_up(program.constraints[j].g.degree) for j in group], default=0)
        measures.append(Measure(i, tuple(clique), t.numerator.restrict(clique),
                                t.denominator.restrict(clique), (i,), tuple(group), max(1, v)))
    indexing = MomentIndexing([mz.dimension for mz in measures], k)
    bld = _Builder(indexing)
    for mz in measures:
        i = mz.index
        bld.add_block(_moment_block(indexing, i, k, f"moment[{i}]"),
                      BlockInfo(f"moment[{i}]", i, None, k))
        for ci in mz.constraints:
            con = program.constraints[ci]
            bld.add_constraint_rows(i, con, ci, con.g.restrict(mz.variables), k)
    for mz in measures:
        bld.add_equality(_linear_form(indexing, mz.index, mz.denominator), 1.0,
                         EqualityInfo(f"normalize[{mz.index}]", "normalize", (mz.index,), None))
    for mz in measures:
        i = mz.index
        for j in pattern.overlaps(i):
            other = measures[j]
            shared = sorted(set(mz.variables) & set(other.variables))
            cap = 2 * k - max(mz.denominator.degree, other.denominator.degree)
            if match_degree is not None:
                cap = min(cap, match_degree)
            if cap < 0:
                continue
            pos_i = [mz.variables.index(s) for s in shared]
            pos_j = [other.variables.index(s) for s in shared]
            for a in monomials_up_to(len(shared), cap):
                ai = [0] * mz.dimension
                aj = [0] * other.dimension
                for e, pi, pj in zip(a, pos_i, pos_j):
                    ai[pi] = e
                    aj[pj] = e
                coefs = _linear_form(indexing, i, mz.denominator, tuple(ai))
                for var, cv in _linear_form(indexing, j, other.denominator, tuple(aj)).items():
                    coefs[var] = coefs.get(var, 0.0) - cv
                bld.add_equality(coefs, 0.0, EqualityInfo(f"link[{i},{j},{a}]", "link", (i, j), a))
    sign = -1.0 if program.sense == "maximize" else 1.0
    prob = bld.problem(_objective(indexing, measures, sign))
    return SDPRelaxation("sparse", k, program, prob, indexing, measures, bld.block_info,
                         bld.eq_info, sign, notes)


def lift_program(program: RationalProgram, mode: str, r_bounds) -> RationalProgram:
    """Epigraph lifting over ``(x, r)``: objective ``sum r_i``.

    Minimization uses ``r_i q_i - p_i >= 0`` (or ``== 0``); maximization uses
    ``p_i - r_i q_i >= 0`` (or ``== 0``). Each ``r_i`` is confined to its
    interval by ``(r_i - lo)(hi - r_i) >= 0``. A sparsity pattern, if present,
    becomes cliques ``I_i + {r_i}``.
    """
    if mode not in ("inequality", "equality"):
        raise ModelingError(f"unknown epigraph mode {mode!r}")
    N = len(program.terms)
    n = program.n
    if r_bounds is None:
        raise ModelingError("epigraph lifting needs finite bounds for every r_i")
    if len(r_bounds) == 2 and np.isscalar(r_bounds[0]):
        r_bounds = [tuple(r_bounds)] * N
    if len(r_bounds) != N:
        raise ModelingError(f"need {N} lifting intervals, got {len(r_bounds)}")
    for lo, hi in r_bounds:
        if not (np.isfinite(lo) and np.isfinite(hi) and lo <= hi):
            raise ModelingError(f"lifting interval ({lo}, {hi}) is not a finite interval")
    nn = n + N
    pos = list(range(n))
    rel = EQ if mode == "equality" else GEQ
    one = Polynomial.constant(nn, 1.0)
    terms, cons = [], []
    for c in program.constraints:
        cons.append(ConstraintPoly(c.g.embed(nn, pos), c.relation, c.origin))
    m0 = len(cons)
    for i, t in enumerate(program.terms):
        r = Polynomial.variable(nn, n + i)
        p = t.numerator.embed(nn, pos)
        q = t.denominator.embed(nn, pos)
        terms.append(RationalTerm(r, one))
        g = r * q - p if program.sense == "minimize" else p - r * q
        cons.append(ConstraintPoly(g, rel, "epigraph"))
        lo, hi = r_bounds[i]
        cons.append(ConstraintPoly((r - lo) * (Polynomial.constant(nn, hi) - r), GEQ,
                                   "epigraph-bound"))
    pattern = None
    if program.pattern is not None:
        pat = program.pattern
        cliques = [tuple(c) + (n + i,) for i, c in enumerate(pat.cliques)]
        groups = [list(a) + [m0 + 2 * i, m0 + 2 * i + 1] for i, a in enumerate(pat.assignment)]
        pattern = SparsityPattern(tuple(cliques), tuple(tuple(g) for g in groups))
    names = tuple(program.names) + tuple(f"r{i + 1}" for i in range(N))
    return RationalProgram(nn, tuple(terms), tuple(cons), program.sense, pattern, None, names)


def build_epigraph(program: RationalProgram, k: int, mode: str = "equality",
                   r_bounds=None) -> SDPRelaxation:
    """Relaxation of the lifted polynomial program (sparse when a pattern exists)."""
    lifted = lift_program(program, mode, r_bounds)
    if lifted.pattern is not None:
        rel = build_sparse(lifted, lifted.pattern, k)
    else:
        rel = build_dense(lifted, k)
    rel.kind = "epigraph-" + rel.kind
    return rel
