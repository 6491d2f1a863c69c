"""Primal-dual interior-point method for :class:`SDPProblem`.

The problem is mapped onto the cone program

    minimize c'x   s.t.   G x + s = h,   B x = d,   s in K (product of PSD cones)

with ``G x = -sum_a x_a A_a`` and ``h = A_0`` blockwise, and solved through
its homogeneous self-dual embedding

    [0]   [ 0   B'  G'  c] [x  ]
    [0] + [-B   0   0   d] [lam]  = 0,     s, z in K,  tau, kappa >= 0.
    [s]   [-G   0   0   h] [z  ]
    [k]   [-c' -d' -h'  0] [tau]

Search directions use Nesterov-Todd scaling and a Mehrotra predictor-corrector
step. Newton systems are reduced to the Schur complement ``H = G' W^-2 G``;
equalities are eliminated with an orthonormal null-space basis of ``B`` so
that only ``Q2' H Q2`` is factored (dense Cholesky).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .problem import SDPProblem, SDPSolution

log = logging.getLogger(__name__)

STEP_FRACTION = 0.99
REFINE = 3


@dataclass
class _Cone:
    vars: np.ndarray     # global variable indices appearing in the block
    coef: np.ndarray     # (p, s, s) coefficient matrices A_a
    const: np.ndarray    # (s, s) constant matrix A_0
    size: int


def _prepare_cones(problem: SDPProblem) -> list:
    cones = []
    for blk in problem.blocks:
        if blk.diagonal:
            # a diagonal block is a product of 1x1 cones
            for i in range(blk.size):
                sel = blk.row == i
                cones.append(_dense_cone(1, blk.var[sel], np.zeros(sel.sum(), dtype=np.int64),
                                         np.zeros(sel.sum(), dtype=np.int64), blk.val[sel]))
        else:
            cones.append(_dense_cone(blk.size, blk.var, blk.row, blk.col, blk.val))
    return cones


def _dense_cone(size, var, row, col, val) -> _Cone:
    vars_ = np.unique(var[var >= 0])
    pos = {v: k for k, v in enumerate(vars_)}
    coef = np.zeros((len(vars_), size, size))
    const = np.zeros((size, size))
    for v, i, j, a in zip(var, row, col, val):
        target = const if v < 0 else coef[pos[v]]
        target[i, j] += a
        if i != j:
            target[j, i] += a
    return _Cone(vars_, coef, const, size)


def _presolve_equalities(B: np.ndarray, d: np.ndarray):
    """Drop linearly dependent equality rows; returns (B, d, consistent)."""
    if B.shape[0] == 0:
        return B, d, True
    norms = np.linalg.norm(B, axis=1)
    B = B / norms[:, None]
    d = d / norms
    _, R, piv = sla.qr(B.T, mode="economic", pivoting=True)
    diag = np.abs(np.diag(R))
    rank = int(np.sum(diag > 1e-10 * diag[0])) if diag.size else 0
    keep = np.sort(piv[:rank])
    drop = np.setdiff1d(np.arange(B.shape[0]), keep)
    consistent = True
    if drop.size:
        coef, *_ = np.linalg.lstsq(B[keep].T, B[drop].T, rcond=None)
        pred = coef.T @ d[keep]
        consistent = bool(np.all(np.abs(pred - d[drop]) <= 1e-8 * (1 + np.abs(d[drop]))))
    return B[keep], d[keep], consistent


def _sym(X):
    return 0.5 * (X + X.T)


def _nt_scaling(S, Z):
    """Return (R, Rinv, lam) with R' Z R = diag(lam) = Rinv S Rinv'."""
    Ls = np.linalg.cholesky(S)
    Lz = np.linalg.cholesky(Z)
    U, lam, Vt = np.linalg.svd(Lz.T @ Ls)
    R = Ls @ Vt.T / np.sqrt(lam)
    Rinv = (np.sqrt(lam)[:, None] * Vt) @ sla.solve_triangular(Ls, np.eye(len(lam)), lower=True)
    return R, Rinv, lam


def _max_step(lam, D):
    """Largest alpha with diag(lam) + alpha*D PSD (inf if unbounded)."""
    s = 1.0 / np.sqrt(lam)
    e = np.linalg.eigvalsh(_sym(D * s[:, None] * s[None, :]))[0]
    return np.inf if e >= 0 else -1.0 / e


class _EqualityBasis:
    """Orthogonal split R^m = range(B') + null(B), computed once per solve."""

    def __init__(self, B, m):
        self.p = B.shape[0]
        if self.p:
            Q, R = np.linalg.qr(B.T, mode="complete")
            self.Q1 = Q[:, :self.p]
            self.Q2 = Q[:, self.p:]
            self.R = R[:self.p, :self.p]
        else:
            self.Q1 = np.zeros((m, 0))
            self.Q2 = np.eye(m)
            self.R = np.zeros((0, 0))

    def particular(self, u2):
        if not self.p:
            return np.zeros(self.Q2.shape[0])
        return self.Q1 @ sla.solve_triangular(self.R, u2, trans="T", lower=False)

    def multiplier(self, v):
        if not self.p:
            return np.zeros(0)
        return sla.solve_triangular(self.R, self.Q1.T @ v, lower=False)


class _KKT:
    """Factorization of the reduced Newton system for one NT scaling."""

    def __init__(self, cones, scalings, basis: _EqualityBasis, m):
        self.cones = cones
        self.scal = scalings
        self.basis = basis
        H = np.zeros((m, m))
        # scaled cones: A_a -> Rinv A_a Rinv'
        self.scaled = []
        for cone, (R, Rinv, lam) in zip(cones, scalings):
            At = Rinv[None] @ cone.coef @ Rinv.T[None] if len(cone.vars) else cone.coef
            self.scaled.append(_Cone(cone.vars, At, cone.const, cone.size))
            if len(cone.vars):
                flat = At.reshape(len(cone.vars), -1)
                H[np.ix_(cone.vars, cone.vars)] += flat @ flat.T
        self.H = H
        self.last_error = 0.0
        Q2 = basis.Q2
        self.Kf = self._chol(Q2.T @ H @ Q2) if Q2.shape[1] else None

    @staticmethod
    def _chol(M):
        """Jacobi-equilibrated Cholesky with a small escalating shift if needed."""
        M = _sym(M)
        dg = np.sqrt(np.maximum(np.diag(M), 1e-300))
        Ms = M / dg[:, None] / dg[None, :]
        reg = 0.0
        for _ in range(8):
            try:
                fac = sla.cho_factor(Ms + reg * np.eye(M.shape[0]), lower=True, check_finite=False)
                return fac, dg
            except np.linalg.LinAlgError:
                reg = 1e-15 if reg == 0.0 else reg * 100
        raise np.linalg.LinAlgError("Schur complement is not positive definite")

    def _cho_solve(self, v):
        fac, dg = self.Kf
        return sla.cho_solve(fac, v / dg) / dg

    def _solve_xy(self, t, u2):
        b = self.basis
        dx = b.particular(u2)
        if self.Kf is not None:
            w = self._cho_solve(b.Q2.T @ (t - self.H @ dx))
            dx = dx + b.Q2 @ w
        return dx, b.multiplier(t - self.H @ dx)

    def _solve_once(self, u1, u2, v3):
        # scaled system: Gs' dZs + B' dlam = u1, B dx = u2, Gs dx - dZs = v3
        t = u1 + _GT(self.scaled, v3, len(u1))
        dx, dlam = self._solve_xy(t, u2)
        dZs = [_sym(g - V3) for g, V3 in zip(_G(self.scaled, dx), v3)]
        return dx, dlam, dZs

    def solve(self, u1, u2, u3, refine=REFINE):
        """Solve G'dZ + B'dlam = u1, B dx = u2, G dx - W^2 dZ = u3.

        Works in the NT-scaled space (dZs = R' dZ R), where the third block is
        the identity; iterative refinement there uses exact operators. Returns
        ``dx, dlam, dZ, dZs``.
        """
        b = self.basis
        v3 = [Rinv @ U3 @ Rinv.T for U3, (_, Rinv, _) in zip(u3, self.scal)]
        dx, dlam, dZs = self._solve_once(u1, u2, v3)
        scale = 1.0 + max(np.max(np.abs(u1), initial=0.0), np.max(np.abs(u2), initial=0.0),
                          max((np.max(np.abs(V)) for V in v3 if V.size), default=0.0))
        for _ in range(refine):
            e1 = u1 - _GT(self.scaled, dZs, len(u1)) - (b.Q1 @ (b.R @ dlam) if b.p else 0.0)
            e2 = u2 - (b.R.T @ (b.Q1.T @ dx) if b.p else np.zeros(0))
            e3 = [V3 - g + dz for V3, g, dz in zip(v3, _G(self.scaled, dx), dZs)]
            err = max(np.max(np.abs(e1), initial=0.0), np.max(np.abs(e2), initial=0.0),
                      max((np.max(np.abs(E)) for E in e3 if E.size), default=0.0))
            self.last_error = err / scale
            if err <= 1e-15 * scale:
                break
            cx, cl, cz = self._solve_once(e1, e2, e3)
            dx = dx + cx
            dlam = dlam + cl
            dZs = [a + c for a, c in zip(dZs, cz)]
        dZ = [_sym(Rinv.T @ dz @ Rinv) for dz, (_, Rinv, _) in zip(dZs, self.scal)]
        return dx, dlam, dZ, dZs


def _G(cones, x):
    return [-np.tensordot(x[c.vars], c.coef, axes=1) if len(c.vars)
            else np.zeros((c.size, c.size)) for c in cones]


def _GT(cones, Z, m):
    out = np.zeros(m)
    for c, Zb in zip(cones, Z):
        if len(c.vars):
            np.add.at(out, c.vars, -(c.coef.reshape(len(c.vars), -1) @ Zb.ravel()))
    return out


def _inner(Xs, Ys):
    return float(sum(np.vdot(X, Y) for X, Y in zip(Xs, Ys)))


def solve(problem: SDPProblem, gap_tol: float = 1e-8, feas_tol: float = 1e-8,
          max_iter: int = 200, seed=None) -> SDPSolution:
    """Solve ``problem``; never raises on numerical trouble, reports a status instead.

    ``seed`` is accepted for interface symmetry; the method is deterministic.
    """
    problem.validate()
    m = problem.m
    c = problem.c.astype(float)
    cones = _prepare_cones(problem)
    B, d, consistent = _presolve_equalities(problem.equality_matrix().toarray(),
                                            problem.eq_rhs.astype(float))
    if not consistent:
        return _finish(problem, "infeasible", np.zeros(m), np.nan, np.nan, np.nan, 0,
                       "equality constraints are inconsistent")
    used = np.zeros(m, dtype=bool)
    for b in problem.blocks:
        used[b.variables] = True
    used[np.unique(problem.eq_col)] = True
    free = ~used & (c != 0.0)
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        sol = _hsd(problem, np.where(free, 0.0, c), cones, B, d, gap_tol, feas_tol, max_iter)
    if np.any(free) and sol.status == "optimal":
        # feasible, and a variable seen by no constraint moves the objective freely
        return _finish(problem, "unbounded", sol.y - np.where(free, np.sign(c), 0.0), np.nan,
                       np.nan, np.nan, sol.iterations, "objective variable appears in no constraint")
    return sol


def _hsd(problem, c, cones, B, d, gap_tol, feas_tol, max_iter):
    m = problem.m
    basis = _EqualityBasis(B, m)
    h = [cn.const for cn in cones]
    nu = sum(cn.size for cn in cones)
    norm_c = 1.0 + np.max(np.abs(c), initial=0.0)
    norm_d = 1.0 + np.max(np.abs(d), initial=0.0)
    norm_h = 1.0 + np.sqrt(sum(np.sum(H * H) for H in h))

    x = np.zeros(m)
    lam = np.zeros(B.shape[0])
    S = [np.eye(cn.size) for cn in cones]
    Z = [np.eye(cn.size) for cn in cones]
    tau = kappa = 1.0

    status, message = "max-iterations", ""
    pcost = dcost = gap = np.nan
    best = None
    it = 0
    for it in range(max_iter + 1):
        GTz = _GT(cones, Z, m)
        Gx = _G(cones, x)
        r1 = B.T @ lam + GTz + c * tau
        r2 = B @ x - d * tau
        r3 = [Sb + g - hb * tau for Sb, g, hb in zip(S, Gx, h)]
        hz = _inner(h, Z)
        r4 = kappa + c @ x + d @ lam + hz
        sz = _inner(S, Z)
        mu = (sz + tau * kappa) / (nu + 1)
        pcost = c @ x / tau
        dcost = -(hz + d @ lam) / tau
        gap = sz / tau ** 2
        pres = max(np.max(np.abs(r2), initial=0.0) / tau / norm_d,
                   np.sqrt(sum(np.sum(R * R) for R in r3)) / tau / norm_h)
        dres = np.max(np.abs(r1), initial=0.0) / tau / norm_c
        relgap = max(gap, abs(pcost - dcost)) / (1.0 + abs(pcost))
        log.debug("it %3d pcost %+.9e dcost %+.9e gap %.2e pres %.2e dres %.2e tau %.2e kappa %.2e",
                  it, pcost, dcost, gap, pres, dres, tau, kappa)
        if pres <= feas_tol and dres <= feas_tol and relgap <= gap_tol:
            status = "optimal"
            break
        score = max(pres / feas_tol, dres / feas_tol, relgap / gap_tol)
        if best is None or score < best[0]:
            best = (score, x / tau, pcost, dcost, gap, pres, dres)
        dual_val = hz + d @ lam
        if dual_val < 0:
            pinf = np.max(np.abs(B.T @ lam + GTz), initial=0.0) / norm_c / (-dual_val)
            if pinf <= feas_tol:
                status, message = "infeasible", "dual ray certifies primal infeasibility"
                break
        cx = c @ x
        if cx < 0:
            ray = max(np.max(np.abs(B @ x), initial=0.0) / norm_d,
                      np.sqrt(sum(np.sum((Sb + g) ** 2) for Sb, g in zip(S, Gx))) / norm_h)
            if ray / (-cx) <= feas_tol:
                status, message = "unbounded", "primal ray certifies dual infeasibility"
                break
        if it == max_iter:
            break

        try:
            scal = [_nt_scaling(Sb, Zb) for Sb, Zb in zip(S, Z)]
            kkt = _KKT(cones, scal, basis, m)
        except np.linalg.LinAlgError as exc:
            status, message = "numerical-failure", f"factorization failed: {exc}"
            break
        lams = [s[2] for s in scal]

        # tau-direction of the embedding (independent of the complementarity target)
        dx1, dl1, dZ1, dZs1 = kkt.solve(-c, d, h)
        denom_tau = -kappa / tau + c @ dx1 + d @ dl1 + _inner(h, dZ1)

        def direction(Dc, tc, eta):
            u3 = [-eta * R3 - Rb @ Dcb @ Rb.T for R3, (Rb, _, _), Dcb in zip(r3, scal, Dc)]
            dx0, dl0, dZ0, dZs0 = kkt.solve(-eta * r1, -eta * r2, u3)
            dtau = (-eta * r4 - tc / tau - (c @ dx0 + d @ dl0 + _inner(h, dZ0))) / denom_tau
            dx = dx0 + dtau * dx1
            dl = dl0 + dtau * dl1
            dZ = [a + dtau * b for a, b in zip(dZ0, dZ1)]
            dkappa = (tc - kappa * dtau) / tau
            # dS from the linearized primal residual keeps S + Gx - h tau on track
            dS = [_sym(-eta * R3 - g + hb * dtau) for R3, g, hb in zip(r3, _G(cones, dx), h)]
            dZs = [a + dtau * b for a, b in zip(dZs0, dZs1)]
            dSs = [_sym(Rinv @ ds @ Rinv.T) for ds, (_, Rinv, _) in zip(dS, scal)]
            return dx, dl, dZ, dS, dZs, dSs, dtau, dkappa

        def step_bound(dZs, dSs, dtau, dkappa):
            a = np.inf
            for lb, dz, ds in zip(lams, dZs, dSs):
                a = min(a, _max_step(lb, dz), _max_step(lb, ds))
            if dtau < 0:
                a = min(a, -tau / dtau)
            if dkappa < 0:
                a = min(a, -kappa / dkappa)
            return a

        try:
            # predictor
            Dc_aff = [-np.diag(lb) for lb in lams]
            aff = direction(Dc_aff, -tau * kappa, 1.0)
            a_aff = min(1.0, step_bound(*aff[4:]))
            sigma = min(1.0, max(0.0, (1.0 - a_aff))) ** 3
            # corrector
            Dc = []
            for lb, dzs, dss in zip(lams, aff[4], aff[5]):
                C = -np.diag(lb * lb) + sigma * mu * np.eye(len(lb)) - _sym(dss @ dzs)
                Dc.append(2.0 * C / (lb[:, None] + lb[None, :]))
            tc = -tau * kappa + sigma * mu - aff[6] * aff[7]
            dx, dl, dZ, dS, dZs, dSs, dtau, dkappa = direction(Dc, tc, 1.0 - sigma)
        except np.linalg.LinAlgError as exc:
            status, message = "numerical-failure", f"linear solve failed: {exc}"
            break
        alpha = min(1.0, STEP_FRACTION * step_bound(dZs, dSs, dtau, dkappa))
        if not np.isfinite(alpha) or alpha < 1e-10:
            status, message = "numerical-failure", "step length collapsed"
            break
        log.debug("    alpha %.3e sigma %.2e refine-err %.1e", alpha, sigma, kkt.last_error)
        x = x + alpha * dx
        lam = lam + alpha * dl
        Z = [_sym(Zb + alpha * dz) for Zb, dz in zip(Z, dZ)]
        S = [_sym(Sb + alpha * ds) for Sb, ds in zip(S, dS)]
        tau = tau + alpha * dtau
        kappa = kappa + alpha * dkappa

    if status == "infeasible":
        y = x / abs(tau) if tau > 0 else x
    elif status in ("max-iterations", "numerical-failure") and best is not None:
        # report the most accurate iterate seen rather than the last one
        _, y, pcost, dcost, gap, pres, dres = best
    else:
        y = x / tau
    return _finish(problem, status, y, pcost, dcost, gap, it, message,
                   pres=pres, dres=dres)


def _finish(problem, status, y, pcost, dcost, gap, it, message, pres=np.nan, dres=np.nan):
    y = np.asarray(y, dtype=float)
    eigs = problem.min_eigenvalues(y) if problem.blocks else []
    obj = float(problem.c @ y) if status not in ("infeasible",) else float("nan")
    return SDPSolution(status=status, y=y, objective=obj,
                       dual_objective=float(dcost), gap=float(gap), iterations=int(it),
                       min_eigenvalues=eigs, primal_residual=float(pres),
                       dual_residual=float(dres), message=message)
