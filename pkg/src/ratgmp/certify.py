"""Rank tests, atom extraction and certification of solved relaxations."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .gmp import RationalProgram
from .polyalg import add_monomials, monomial_index, monomials_up_to, poly_gradient, poly_hessian
from .relax import SDPRelaxation

CERTIFIED = "CertifiedOptimal"
BOUND_ONLY = "LowerBoundOnly"
SOLVER_FAILED = "SolverFailed"

FEAS_TOL = 1e-6
OBJ_TOL = 1e-4
STITCH_TOL = 1e-4
CLUSTER_TOL = 1e-5


def numerical_rank(matrix, tol: float = 1e-3):
    """``(rank, singular values)``; rank counts values above ``tol * max``."""
    M = np.asarray(matrix, dtype=float)
    if M.size == 0:
        return 0, np.zeros(0)
    sv = np.linalg.svd(M, compute_uv=False)
    if sv[0] <= 0.0:
        return 0, sv
    return int(np.sum(sv > tol * sv[0])), sv


@dataclass
class MeasureRank:
    measure: int
    order: int               # order s at which the flatness test was evaluated
    offset: int
    rank: int                # rank M_s
    sub_rank: int            # rank M_{s - offset}
    singular_values: list
    sub_singular_values: list
    flat: bool


@dataclass
class RankProfile:
    measures: list = field(default_factory=list)
    overlaps: dict = field(default_factory=dict)   # (i, j) -> rank of the overlap moment matrix

    @property
    def flat(self) -> bool:
        return bool(self.measures) and all(m.flat for m in self.measures)


@dataclass
class Certificate:
    order: int
    bound: float
    status: str
    profile: RankProfile | None = None
    atoms: list = field(default_factory=list)        # points in the relaxed program's coordinates
    weights: list = field(default_factory=list)
    values: list = field(default_factory=list)       # objective at each atom
    violations: list = field(default_factory=list)   # max constraint violation at each atom
    objective_residual: float = float("nan")
    approximate: list | None = None                  # first-order moment estimate
    diagnostics: list = field(default_factory=list)

    @property
    def certified(self) -> bool:
        return self.status == CERTIFIED


def _moment_matrix(mom: dict, n: int, d: int) -> np.ndarray:
    rows = monomials_up_to(n, d)
    return np.array([[mom[add_monomials(a, b)] for b in rows] for a in rows])


def flat_orders(mom: dict, n: int, k: int, offset: int, tol: float) -> list:
    """Rank data for ``s = k, k-1, ..., offset``; flat orders come out largest first."""
    out = []
    for s in range(k, offset - 1, -1):
        r, sv = numerical_rank(_moment_matrix(mom, n, s), tol)
        rs, svs = numerical_rank(_moment_matrix(mom, n, s - offset), tol)
        out.append(MeasureRank(-1, s, offset, r, rs, sv.tolist(), svs.tolist(), r == rs and r > 0))
    return out


def flat_order(mom: dict, n: int, k: int, offset: int, tol: float):
    """Largest ``s <= k`` with rank M_s == rank M_{s-offset}; returns a MeasureRank.

    Falls back to ``s = k`` (not flat) when no order passes.
    """
    infos = flat_orders(mom, n, k, offset, tol)
    for info in infos:
        if info.flat:
            return info
    if infos:
        return infos[0]
    r, sv = numerical_rank(_moment_matrix(mom, n, k), tol)
    return MeasureRank(-1, k, offset, r, 0, sv.tolist(), [], False)


def extract_atoms(mom: dict, n: int, s: int, rank: int, seed: int = 0, pivot_tol: float = 1e-6):
    """Atoms of a flat truncated moment sequence from its order-``s`` moment matrix.

    Returns ``(points, weights)``, points as an ``(r, n)`` array, or raises
    ``ValueError`` when the multiplication matrices cannot be formed.
    """
    basis = monomials_up_to(n, s)
    M = _moment_matrix(mom, n, s)
    w, U = np.linalg.eigh(M)
    order = np.argsort(w)[::-1][:rank]
    V = U[:, order] * np.sqrt(np.maximum(w[order], 0.0))
    # greedy pivot rows in graded order: the monomial basis of the quotient
    scale = max(np.max(np.linalg.norm(V, axis=1)), 1e-300)
    pivots, Qb = [], np.zeros((0, rank))
    for i, mono in enumerate(basis):
        if sum(mono) > s - 1 or len(pivots) == rank:
            break
        v = V[i]
        resid = v - Qb.T @ (Qb @ v) if len(pivots) else v
        if np.linalg.norm(resid) > pivot_tol * scale:
            pivots.append(i)
            Qb = np.vstack([Qb, resid / np.linalg.norm(resid)])
    if len(pivots) < rank:
        raise ValueError(f"found {len(pivots)} independent monomials of degree < {s}, need {rank}")
    Uech = V @ np.linalg.inv(V[pivots])          # column echelon form, identity on pivots
    index = monomial_index(n, s)
    N = []
    for j in range(n):
        e = tuple(1 if t == j else 0 for t in range(n))
        rows = [index[add_monomials(basis[p], e)] for p in pivots]
        N.append(Uech[rows])
    rng = np.random.default_rng(seed)
    lam = rng.random(n)
    lam /= lam.sum()
    comb = sum(l * Nj for l, Nj in zip(lam, N))
    T, Q = sla.schur(comb, output="real", sort=None)
    pts = np.array([[Q[:, l] @ Nj @ Q[:, l] for Nj in N] for l in range(rank)])
    pts = _cluster(pts)
    weights = _weights(mom, n, s, pts)
    return pts, weights


def _cluster(pts: np.ndarray, tol: float = CLUSTER_TOL) -> np.ndarray:
    kept: list = []
    for p in pts:
        if not any(np.linalg.norm(p - q) <= tol * (1.0 + np.linalg.norm(q)) for q in kept):
            kept.append(p)
    return np.array(kept).reshape(len(kept), pts.shape[1] if pts.ndim == 2 else 0)


def _weights(mom: dict, n: int, s: int, pts: np.ndarray) -> np.ndarray:
    basis = monomials_up_to(n, s)
    A = np.array([[np.prod(p ** np.asarray(a)) for p in pts] for a in basis])
    b = np.array([mom[a] for a in basis])
    w, *_ = np.linalg.lstsq(A, b, rcond=None)
    return w


def _measure_moments(rel: SDPRelaxation, y, i: int) -> dict:
    mom = rel.indexing.moments(y, i)
    mass = mom[tuple([0] * rel.indexing.dims[i])]
    if abs(mass) > 1e-300:
        mom = {a: v / mass for a, v in mom.items()}
    return mom


def _approximate_point(rel: SDPRelaxation, y) -> list:
    n = rel.program.n
    est = [None] * n
    for mz in rel.measures:
        mom = _measure_moments(rel, y, mz.index)
        for loc, glob in enumerate(mz.variables):
            if est[glob] is None:
                e = tuple(1 if t == loc else 0 for t in range(mz.dimension))
                est[glob] = float(mom[e])
    return [0.0 if v is None else v for v in est]


def _stitch(rel: SDPRelaxation, local_atoms: list) -> list:
    """Combine per-clique atoms into full points that agree on shared coordinates."""
    n = rel.program.n
    partial = [dict()]
    for mz, pts in zip(rel.measures, local_atoms):
        merged = []
        for part in partial:
            for p in pts:
                cand = dict(part)
                ok = True
                for loc, glob in enumerate(mz.variables):
                    v = float(p[loc])
                    if glob in cand:
                        if abs(cand[glob] - v) > STITCH_TOL * (1.0 + abs(v)):
                            ok = False
                            break
                        continue
                    cand[glob] = v
                if ok:
                    merged.append(cand)
        partial = merged
        if not partial:
            return []
    return [np.array([c[j] for j in range(n)]) for c in partial if len(c) == n]


def check_flat_and_extract(solution, relaxation: SDPRelaxation, tol: float = 1e-3,
                           seed: int = 0) -> Certificate:
    """Rank tests per measure, atom extraction and a-posteriori verification."""
    rel = relaxation
    k = rel.order
    bound = rel.bound(solution.objective) if np.isfinite(solution.objective) else float("nan")
    if solution.status != "optimal":
        return Certificate(k, bound, SOLVER_FAILED,
                           diagnostics=[f"solver status {solution.status}: {solution.message}"])
    y = solution.y
    profile = RankProfile()
    local_atoms, local_weights, diag = [], [], []
    dense = not rel.kind.endswith("sparse")
    for mz in rel.measures:
        mom = _measure_moments(rel, y, mz.index)
        infos = [i for i in flat_orders(mom, mz.dimension, k, mz.flat_offset, tol) if i.flat]
        if not infos:
            info = flat_order(mom, mz.dimension, k, mz.flat_offset, tol)
            info.measure = mz.index
            profile.measures.append(info)
            diag.append(f"measure {mz.index}: rank M_{info.order} = {info.rank} but "
                        f"rank M_{info.order - info.offset} = {info.sub_rank}")
            continue
        chosen = None
        for info in infos:
            try:
                pts, w = extract_atoms(mom, mz.dimension, info.order, info.rank, seed)
            except (ValueError, np.linalg.LinAlgError) as exc:
                diag.append(f"measure {mz.index}: extraction at s = {info.order} failed ({exc})")
                continue
            if chosen is None:
                chosen = (info, pts, w)
            # dense atoms are full points, so each flat order can be checked on its own;
            # contamination from escaping mass often spoils only the highest orders
            if dense and _atoms_verify(rel.program, pts, bound):
                chosen = (info, pts, w)
                break
            if not dense:
                break
        info = chosen[0] if chosen else infos[0]
        info.measure = mz.index
        profile.measures.append(info)
        if chosen is None:
            continue
        local_atoms.append(chosen[1])
        local_weights.append(chosen[2])
    if rel.kind.endswith("sparse"):
        for mz in rel.measures:
            for j in _later_overlaps(rel, mz.index):
                shared = sorted(set(mz.variables) & set(rel.measures[j].variables))
                mom = _measure_moments(rel, y, mz.index)
                pos = [mz.variables.index(v) for v in shared]
                sub = {}
                for a in monomials_up_to(len(shared), 2 * k):
                    full = [0] * mz.dimension
                    for e, p in zip(a, pos):
                        full[p] = e
                    sub[a] = mom[tuple(full)]
                r, _ = numerical_rank(_moment_matrix(sub, len(shared), k), tol)
                profile.overlaps[(mz.index, j)] = r
                if r != 1:
                    diag.append(f"overlap ({mz.index},{j}) has rank {r}; stitching by coordinates")
    cert = Certificate(k, bound, BOUND_ONLY, profile, diagnostics=diag)
    cert.approximate = _approximate_point(rel, y)
    if not profile.flat or len(local_atoms) != len(rel.measures):
        return cert
    if rel.kind.endswith("sparse"):
        atoms = _stitch(rel, local_atoms)
        weights = [float("nan")] * len(atoms)
    else:
        atoms = list(local_atoms[0])
        weights = [float(v) for v in local_weights[0]]
        for pts in local_atoms[1:]:
            for p in pts:
                if not any(np.linalg.norm(p - q) <= STITCH_TOL * (1 + np.linalg.norm(q)) for q in atoms):
                    atoms.append(p)
                    weights.append(float("nan"))
    if not atoms:
        cert.diagnostics.append("no consistent atoms after stitching")
        return cert
    prog = rel.program
    cert.atoms = [np.asarray(a, dtype=float) for a in atoms]
    cert.weights = weights
    cert.values = [prog.objective(a) for a in cert.atoms]
    cert.violations = [prog.max_violation(a) for a in cert.atoms]
    cert.objective_residual = max(abs(v - bound) for v in cert.values)
    ok = all(v <= FEAS_TOL for v in cert.violations) and \
        cert.objective_residual <= OBJ_TOL * (1.0 + abs(bound))
    if ok:
        cert.status = CERTIFIED
    else:
        cert.diagnostics.append(
            f"atoms fail verification: max violation {max(cert.violations):.2e}, "
            f"objective residual {cert.objective_residual:.2e}")
    return cert


def _atoms_verify(prog: RationalProgram, pts, bound: float) -> bool:
    try:
        return len(pts) > 0 and all(
            prog.max_violation(p) <= FEAS_TOL and
            abs(prog.objective(p) - bound) <= OBJ_TOL * (1.0 + abs(bound)) for p in pts)
    except ZeroDivisionError:
        return False


def _later_overlaps(rel, i):
    vi = set(rel.measures[i].variables)
    return [j for j in range(i + 1, len(rel.measures)) if vi & set(rel.measures[j].variables)]


# ---------------------------------------------------------------- local polish

@dataclass
class PolishResult:
    x: np.ndarray
    value: float
    iterations: int
    converged: bool
    aborted: bool = False
    message: str = ""


def variable_bounds(program: RationalProgram):
    """Per-variable intervals implied by univariate quadratic constraints ``a + b x + c x^2 >= 0``."""
    lo = np.full(program.n, -np.inf)
    hi = np.full(program.n, np.inf)
    for con in program.constraints:
        if con.is_equality or len(con.g.support) != 1 or con.g.degree != 2:
            continue
        (j,) = tuple(con.g.support)
        e = lambda d: tuple(d if t == j else 0 for t in range(program.n))
        a, b, c = (con.g.coefficient(e(d)) for d in (0, 1, 2))
        disc = b * b - 4 * a * c
        if c >= 0 or disc < 0:
            continue
        r1, r2 = sorted(((-b - np.sqrt(disc)) / (2 * c), (-b + np.sqrt(disc)) / (2 * c)))
        lo[j] = max(lo[j], r1)
        hi[j] = min(hi[j], r2)
    return lo, hi


class _RationalSum:
    """Value, gradient and Hessian of ``sign * sum p_i / q_i``."""

    def __init__(self, program: RationalProgram, sign: float):
        self.sign = sign
        self.parts = []
        for t in program.terms:
            p, q = t.numerator, t.denominator
            self.parts.append((p, q, poly_gradient(p), poly_gradient(q),
                               poly_hessian(p), poly_hessian(q)))

    def __call__(self, x, derivatives=True):
        n = len(x)
        f = 0.0
        g = np.zeros(n)
        H = np.zeros((n, n))
        for p, q, dp, dq, hp, hq in self.parts:
            pv, qv = p(x), q(x)
            if qv == 0.0:
                raise ZeroDivisionError("denominator vanishes")
            f += pv / qv
            if not derivatives:
                continue
            gp = np.array([d(x) for d in dp])
            gq = np.array([d(x) for d in dq])
            Hp = np.array([[h(x) for h in row] for row in hp])
            Hq = np.array([[h(x) for h in row] for row in hq])
            g += gp / qv - pv * gq / qv ** 2
            H += (Hp / qv - (np.outer(gp, gq) + np.outer(gq, gp)) / qv ** 2
                  - pv * Hq / qv ** 2 + 2 * pv * np.outer(gq, gq) / qv ** 3)
        return self.sign * f, self.sign * g, self.sign * H


def polish(program: RationalProgram, x0, max_iter: int = 100, step_tol: float = 1e-10,
           bounds=None) -> PolishResult:
    """Damped Newton on the objective with Armijo backtracking and box projection.

    The iterate never gets worse than ``x0`` in the program's sense.
    """
    sign = 1.0 if program.sense == "minimize" else -1.0
    F = _RationalSum(program, sign)
    lo, hi = variable_bounds(program) if bounds is None else (np.asarray(bounds[0], float),
                                                                 np.asarray(bounds[1], float))
    x = np.clip(np.asarray(x0, dtype=float), lo, hi)
    try:
        f, g, H = F(x)
    except ZeroDivisionError:
        return PolishResult(np.asarray(x0, float), float("nan"), 0, False, True,
                            "denominator vanishes at the start point")
    it = 0
    converged = False
    for it in range(1, max_iter + 1):
        if np.linalg.norm(g) <= step_tol:
            converged = True
            it -= 1
            break
        w, U = np.linalg.eigh(H)
        shift = max(0.0, 1e-8 * max(1.0, np.max(np.abs(w))) - w.min())
        d = -U @ ((U.T @ g) / (w + shift))
        if g @ d >= 0:
            d = -g
        t = 1.0
        accepted = False
        while t > 1e-14:
            xn = np.clip(x + t * d, lo, hi)
            try:
                fn = F(xn, derivatives=False)[0]
            except ZeroDivisionError:
                t *= 0.5
                continue
            if fn <= f + 1e-4 * t * (g @ (xn - x)) and fn <= f:
                accepted = True
                break
            t *= 0.5
        if not accepted:
            converged = np.linalg.norm(np.clip(x - g, lo, hi) - x) <= 1e-8
            break
        step = np.linalg.norm(xn - x)
        x = xn
        f, g, H = F(x)
        if step <= step_tol * (1.0 + np.linalg.norm(x)):
            converged = True
            break
    return PolishResult(x, float(sign * f), it, converged)


__all__ = ["numerical_rank", "RankProfile", "MeasureRank", "Certificate", "flat_order",
           "flat_orders", "extract_atoms", "check_flat_and_extract", "polish", "PolishResult",
           "variable_bounds", "CERTIFIED", "BOUND_ONLY", "SOLVER_FAILED"]
