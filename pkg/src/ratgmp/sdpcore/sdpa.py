"""SDPA sparse format (``.dat-s``) reader and writer.

SDPA reads ``minimize c'x  s.t.  sum_a x_a F_a - F_0 >= 0``, so the constant
matrix ``A_0`` of a block is written with flipped sign as ``F_0 = -A_0``.
Equalities have no native encoding; each becomes a 2x2 diagonal block
``diag(g, -g)`` before export.
"""

from __future__ import annotations

import re

import numpy as np

from ..errors import ParseError
from .problem import Block, SDPProblem

_SEP = re.compile(r"[\s,{}()]+")


def _fmt(v: float) -> str:
    return repr(float(v))


def export_sdpa(problem: SDPProblem) -> str:
    problem.validate()
    if problem.n_equalities:
        problem = problem.with_equalities_as_blocks()
    sizes = [(-b.size if b.diagonal else b.size) for b in problem.blocks]
    lines = [str(problem.m), str(len(problem.blocks)),
             " ".join(str(s) for s in sizes),
             " ".join(_fmt(v) for v in problem.c)]
    rows = []
    for bno, b in enumerate(problem.blocks, start=1):
        for v, i, j, a in zip(b.var, b.row, b.col, b.val):
            matno = int(v) + 1
            val = -a if matno == 0 else a
            rows.append((matno, bno, int(i) + 1, int(j) + 1, val))
    rows.sort(key=lambda r: r[:4])
    lines.extend(f"{m} {bn} {i} {j} {_fmt(v)}" for m, bn, i, j, v in rows)
    return "\n".join(lines) + "\n"


def _tokens(line: str) -> list:
    return [t for t in _SEP.split(line.strip()) if t]


def _int(tok, lineno, what):
    try:
        return int(tok)
    except ValueError:
        try:
            f = float(tok)
        except ValueError:
            raise ParseError(f"{what}: expected an integer, got {tok!r}", "header", lineno) from None
        if f != int(f):
            raise ParseError(f"{what}: expected an integer, got {tok!r}", "header", lineno)
        return int(f)


def _float(tok, lineno):
    try:
        return float(tok)
    except ValueError:
        raise ParseError(f"non-numeric value {tok!r}", "entry", lineno) from None


def import_sdpa(text: str) -> SDPProblem:
    """Parse ``.dat-s`` text; blocks are kept exactly as written."""
    raw = text.splitlines()
    body = [(n, ln) for n, ln in enumerate(raw, start=1)
            if ln.strip() and not ln.lstrip().startswith(('"', "*"))]
    it = iter(body)

    def header(what):
        try:
            return next(it)
        except StopIteration:
            raise ParseError(f"missing header line: {what}", "header", len(raw)) from None

    n, line = header("number of variables")
    toks = _tokens(line)
    if not toks:
        raise ParseError("empty header line", "header", n)
    m = _int(toks[0], n, "number of variables")
    n, line = header("number of blocks")
    toks = _tokens(line)
    if not toks:
        raise ParseError("empty header line", "header", n)
    nb = _int(toks[0], n, "number of blocks")
    if m < 0 or nb < 0:
        raise ParseError("negative count in header", "header", n)
    sizes: list = []
    c: list = []
    if nb:
        n, line = header("block sizes")
        sizes = [_int(t, n, "block size") for t in _tokens(line)][:nb]
        if len(sizes) != nb or any(s == 0 for s in sizes):
            raise ParseError(f"expected {nb} nonzero block sizes", "header", n)
    while len(c) < m:
        n, line = header("objective vector")
        c.extend(_float(t, n) for t in _tokens(line))
    if len(c) != m:
        raise ParseError(f"objective has {len(c)} entries, expected {m}", "header", n)
    entries = [[] for _ in range(nb)]
    for n, line in it:
        toks = _tokens(line)
        if len(toks) != 5:
            raise ParseError(f"expected 5 fields 'matno blockno i j value', got {len(toks)}",
                             "entry", n)
        matno = _int(toks[0], n, "matrix number")
        bno = _int(toks[1], n, "block number")
        i = _int(toks[2], n, "row index")
        j = _int(toks[3], n, "column index")
        val = _float(toks[4], n)
        if not 0 <= matno <= m:
            raise ParseError(f"matrix number {matno} outside 0..{m}", "entry", n)
        if not 1 <= bno <= nb:
            raise ParseError(f"block {bno} outside 1..{nb}", "entry", n)
        size = abs(sizes[bno - 1])
        if not (1 <= i <= size and 1 <= j <= size):
            raise ParseError(f"index ({i},{j}) outside block {bno} of size {size}", "entry", n)
        if sizes[bno - 1] < 0 and i != j:
            raise ParseError(f"off-diagonal entry in diagonal block {bno}", "entry", n)
        entries[bno - 1].append((matno - 1, i - 1, j - 1, -val if matno == 0 else val))
    blocks = [Block.from_entries(abs(s), e, diagonal=s < 0) for s, e in zip(sizes, entries)]
    return SDPProblem(m, np.array(c, dtype=float), blocks)


def same_structure(a: SDPProblem, b: SDPProblem) -> bool:
    """Exact equality of dimensions, objective, block shapes and coefficient triplets."""
    if a.m != b.m or not np.array_equal(a.c, b.c) or len(a.blocks) != len(b.blocks):
        return False
    if a.n_equalities or b.n_equalities:
        return False
    for x, y in zip(a.blocks, b.blocks):
        if x.size != y.size or x.diagonal != y.diagonal:
            return False
        for f in ("var", "row", "col", "val"):
            if not np.array_equal(getattr(x, f), getattr(y, f)):
                return False
    return True
