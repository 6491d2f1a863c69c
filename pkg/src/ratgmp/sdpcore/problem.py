"""Standard-form container for linear matrix inequality problems.

    minimize    c . y
    subject to  F_b(y) = A_b0 + sum_a y_a A_ba  >= 0   (PSD, one per block)
                B y = d

Each block stores its coefficient matrices as upper-triangular COO triplets
``(var, row, col, val)`` with ``var == -1`` for the constant matrix.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from ..errors import ModelingError


@dataclass
class Block:
    size: int
    var: np.ndarray
    row: np.ndarray
    col: np.ndarray
    val: np.ndarray
    diagonal: bool = False
    label: str = ""

    @classmethod
    def from_entries(cls, size, entries, diagonal=False, label=""):
        """Aggregate ``(var, i, j, value)`` tuples, folding (j, i) onto i <= j."""
        acc: dict = {}
        for var, i, j, v in entries:
            if i > j:
                i, j = j, i
            key = (int(var), int(i), int(j))
            acc[key] = acc.get(key, 0.0) + float(v)
        keys = sorted(k for k, v in acc.items() if v != 0.0)
        if keys:
            var, row, col = (np.array(t, dtype=np.int64) for t in zip(*keys))
        else:
            var = row = col = np.zeros(0, dtype=np.int64)
        val = np.array([acc[k] for k in keys], dtype=float)
        return cls(int(size), var, row, col, val, diagonal, label)

    def matrix(self, y: np.ndarray) -> np.ndarray:
        coef = np.where(self.var < 0, 1.0, y[np.maximum(self.var, 0)] if len(y) else 1.0)
        out = np.zeros((self.size, self.size))
        np.add.at(out, (self.row, self.col), coef * self.val)
        off = self.row != self.col
        np.add.at(out, (self.col[off], self.row[off]), (coef * self.val)[off])
        return out

    @property
    def variables(self) -> np.ndarray:
        return np.unique(self.var[self.var >= 0])


@dataclass
class SDPProblem:
    m: int
    c: np.ndarray
    blocks: list = field(default_factory=list)
    eq_row: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    eq_col: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    eq_val: np.ndarray = field(default_factory=lambda: np.zeros(0))
    eq_rhs: np.ndarray = field(default_factory=lambda: np.zeros(0))
    eq_labels: list = field(default_factory=list)

    def __post_init__(self):
        self.c = np.asarray(self.c, dtype=float).reshape(-1)
        self.eq_rhs = np.asarray(self.eq_rhs, dtype=float).reshape(-1)

    @property
    def n_equalities(self) -> int:
        return len(self.eq_rhs)

    def equality_matrix(self) -> sp.csr_matrix:
        return sp.csr_matrix((self.eq_val, (self.eq_row, self.eq_col)),
                             shape=(self.n_equalities, self.m))

    def validate(self) -> None:
        if self.c.shape != (self.m,):
            raise ModelingError(f"objective has length {self.c.shape[0]}, expected {self.m}")
        for k, b in enumerate(self.blocks):
            if len(b.var) and (b.var.max() >= self.m):
                raise ModelingError(f"block {k} references variable >= {self.m}")
            if len(b.row) and (b.row.min() < 0 or b.col.max() >= b.size):
                raise ModelingError(f"block {k} has an entry outside its {b.size}x{b.size} range")
            if b.diagonal and np.any(b.row != b.col):
                raise ModelingError(f"diagonal block {k} has off-diagonal entries")
        if len(self.eq_col) and self.eq_col.max() >= self.m:
            raise ModelingError("equality references an unknown variable")
        counts = np.bincount(self.eq_row, minlength=self.n_equalities) if self.n_equalities else []
        if self.n_equalities and np.any(np.asarray(counts) == 0):
            raise ModelingError("equality row without nonzero coefficient")

    def block_matrices(self, y) -> list:
        y = np.asarray(y, dtype=float)
        return [b.matrix(y) for b in self.blocks]

    def min_eigenvalues(self, y) -> list:
        return [float(np.linalg.eigvalsh(F)[0]) if F.size else 0.0
                for F in self.block_matrices(y)]

    def equality_residual(self, y) -> float:
        if not self.n_equalities:
            return 0.0
        return float(np.max(np.abs(self.equality_matrix() @ np.asarray(y) - self.eq_rhs)))

    def with_equalities_as_blocks(self) -> "SDPProblem":
        """Replace each equality ``g = B_r y - d_r`` by a 2x2 diagonal block diag(g, -g)."""
        blocks = list(self.blocks)
        Bcsr = self.equality_matrix()
        for r in range(self.n_equalities):
            lo, hi = Bcsr.indptr[r], Bcsr.indptr[r + 1]
            entries = []
            for var, v in zip(Bcsr.indices[lo:hi], Bcsr.data[lo:hi]):
                entries.append((var, 0, 0, v))
                entries.append((var, 1, 1, -v))
            if self.eq_rhs[r] != 0.0:
                entries.append((-1, 0, 0, -self.eq_rhs[r]))
                entries.append((-1, 1, 1, self.eq_rhs[r]))
            label = self.eq_labels[r] if r < len(self.eq_labels) else f"eq{r}"
            blocks.append(Block.from_entries(2, entries, diagonal=True, label=label))
        return SDPProblem(self.m, self.c.copy(), blocks)

    def scaled_objective(self, factor: float) -> "SDPProblem":
        return SDPProblem(self.m, self.c * factor, list(self.blocks), self.eq_row.copy(),
                          self.eq_col.copy(), self.eq_val.copy(), self.eq_rhs.copy(),
                          list(self.eq_labels))


@dataclass
class SDPSolution:
    status: str  # optimal | infeasible | unbounded | max-iterations | numerical-failure
    y: np.ndarray
    objective: float
    dual_objective: float
    gap: float
    iterations: int
    min_eigenvalues: list
    primal_residual: float = float("nan")
    dual_residual: float = float("nan")
    message: str = ""

    @property
    def optimal(self) -> bool:
        return self.status == "optimal"
