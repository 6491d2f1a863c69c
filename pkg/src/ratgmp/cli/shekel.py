"""Shekel foxhole problems built from a user-supplied data file.

The file holds whitespace-separated numbers: one row ``a_i1 ... a_in`` per
foxhole, then a final row ``c_1 ... c_N``. Lines starting with ``#`` are
ignored.
"""

from __future__ import annotations

import numpy as np

from ..errors import ParseError
from ..polyalg import Polynomial
from .problemfile import ProblemFile


def read_shekel(text: str):
    """Return ``(A, c)`` with ``A`` of shape ``(N, n)``."""
    rows = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        try:
            rows.append((lineno, [float(t) for t in line.replace(",", " ").split()]))
        except ValueError:
            raise ParseError(f"non-numeric entry in {line!r}", "syntax", lineno) from None
    if len(rows) < 2:
        raise ParseError("need at least one a-row and the c-row", "syntax", None)
    *arows, (clineno, c) = rows
    n = len(arows[0][1])
    for lineno, r in arows:
        if len(r) != n:
            raise ParseError(f"row has {len(r)} entries, expected {n}", "syntax", lineno)
    if len(c) != len(arows):
        raise ParseError(f"c-row has {len(c)} entries for {len(arows)} foxholes", "syntax",
                         clineno)
    if any(v <= 0 for v in c):
        raise ParseError("c_i must be positive so that denominators never vanish", "syntax",
                         clineno)
    return np.array([r for _, r in arows]), np.array(c)


def shekel_problem(A, c, box=(0.0, 10.0)) -> ProblemFile:
    """Maximize ``sum_i 1 / (||x - a_i||^2 + c_i)`` over the box, rescaled to ``[-1, 1]^n``.

    The options carry the scaling and a ball of radius ``sqrt(n)`` centred in
    the box; sparsity is never used because every term involves every variable.
    """
    A = np.asarray(A, dtype=float)
    N, n = A.shape
    names = [f"x{j + 1}" for j in range(n)]
    one = Polynomial.constant(n, 1.0)
    terms = []
    for i in range(N):
        q = float(c[i]) * one
        for j in range(n):
            q = q + (Polynomial.variable(n, j) - float(A[i, j])) ** 2
        terms.append((one, q))
    lo, hi = box
    half, mid = (hi - lo) / 2.0, (hi + lo) / 2.0
    box_spec = " ".join(f"{v}:{lo!r}:{hi!r}" for v in names)
    scale = " ".join(f"{v}:{half!r}:{mid!r}" for v in names)
    opts = {"bounds": box_spec, "scale": scale, "ball": repr(float(n))}
    return ProblemFile(names, "maximize", terms, [], [], opts)
