import numpy as np
import pytest
from scipy.optimize import brentq, linear_sum_assignment, minimize

from conftest import bounds_objective, bounds_problem, sparse4, wilkinson
from ratgmp.certify import (BOUND_ONLY, CERTIFIED, SOLVER_FAILED, check_flat_and_extract,
                            extract_atoms, numerical_rank, polish)
from ratgmp.gmp import ConstraintPoly, RationalProgram, RationalTerm, infer_cliques
from ratgmp.polyalg import Polynomial, monomials_up_to
from ratgmp.relax import build_dense, build_sparse
from ratgmp.sdpcore import SDPSolution, solve


def moments_of(points, weights, n, degree):
    return {a: float(sum(w * np.prod(np.asarray(p) ** np.asarray(a))
                         for p, w in zip(points, weights)))
            for a in monomials_up_to(n, degree)}


def test_numerical_rank_examples():
    assert numerical_rank(np.eye(3))[0] == 3
    v = np.random.default_rng(1).normal(size=5)
    assert numerical_rank(np.outer(v, v))[0] == 1
    mom = [1.0, 0.5, 0.5, 0.5, 0.5]
    H = np.array([[mom[i + j] for j in range(3)] for i in range(3)])
    assert numerical_rank(H)[0] == 2
    assert numerical_rank(np.zeros((2, 2)))[0] == 0


def test_singular_values_are_sorted():
    A = np.random.default_rng(2).normal(size=(6, 6))
    _, sv = numerical_rank(A + A.T)
    assert np.all(np.diff(sv) <= 0)


def test_extraction_oracle_100_trials():
    rng = np.random.default_rng(100)
    worst = 0.0
    for _ in range(100):
        n = int(rng.integers(1, 4))
        r = int(rng.integers(1, 4))
        while True:
            pts = rng.uniform(-1, 1, size=(r, n))
            gaps = [np.linalg.norm(pts[i] - pts[j]) for i in range(r) for j in range(i)]
            if not gaps or min(gaps) > 0.1:
                break
        w = rng.uniform(0.2, 1.0, size=r)
        w /= w.sum()
        s = r if n == 1 else 2 if r <= n + 1 else 3
        mom = moments_of(pts, w, n, 2 * s)
        assert numerical_rank(np.array([[mom[tuple(np.add(a, b))] for b in monomials_up_to(n, s)]
                                        for a in monomials_up_to(n, s)]), 1e-10)[0] == r
        got, gw = extract_atoms(mom, n, s, r, seed=0)
        assert got.shape == (r, n)
        cost = np.linalg.norm(got[:, None, :] - pts[None, :, :], axis=2)
        i, j = linear_sum_assignment(cost)
        worst = max(worst, cost[i, j].max())
        assert np.allclose(gw[i], w[j], atol=1e-6)
    assert worst <= 1e-6


def solved(rel):
    sol = solve(rel.problem)
    return sol, check_flat_and_extract(sol, rel)


def test_wilkinson_certificate():
    rel = build_dense(wilkinson(), 1)
    sol, cert = solved(rel)
    assert cert.status == CERTIFIED
    assert all(m.rank == 1 for m in cert.profile.measures)
    assert len(cert.atoms) == 1 and abs(cert.atoms[0][0]) < 1e-4
    assert abs(cert.bound - 3.5977) < 1e-3


def test_two_ratio_sum_certifies_at_order_9():
    _, cert = solved(build_dense(bounds_problem(), 9))
    assert cert.status == CERTIFIED
    assert abs(cert.atoms[0][0] + 1.4215) < 1e-3
    assert abs(cert.bound - 1.1286) < 1e-3


def test_two_ratio_sum_order_2_is_bound_only():
    _, cert = solved(build_dense(bounds_problem(), 2))
    assert cert.status == BOUND_ONLY
    assert cert.diagnostics
    assert cert.approximate is not None


def test_sparse_certificate_stitches_atoms():
    prog = sparse4()
    _, cert = solved(build_sparse(prog, infer_cliques(prog), 2))
    assert cert.status == CERTIFIED
    # x -> -x symmetry gives two minimizers, so the shared x1 coordinate has two values
    assert set(cert.profile.overlaps.values()) == {2}
    assert len(cert.atoms) == 2
    for atom in cert.atoms:
        assert prog.max_violation(atom) <= 1e-6
        assert abs(prog.objective(atom) - cert.bound) <= 1e-4 * (1 + abs(cert.bound))


@pytest.mark.parametrize("make", [lambda: build_dense(wilkinson(), 2),
                                  lambda: build_dense(bounds_problem(3), 4),
                                  lambda: build_dense(sparse4(), 2),
                                  lambda: build_sparse(sparse4(), infer_cliques(sparse4()), 2)])
def test_rank_monotonicity_and_soundness(make):
    rel = make()
    _, cert = solved(rel)
    for m in cert.profile.measures:
        assert m.sub_rank <= m.rank
    if cert.certified:
        for atom in cert.atoms:
            assert rel.program.max_violation(atom) <= 1e-6
            assert abs(rel.program.objective(atom) - cert.bound) <= 1e-4 * (1 + abs(cert.bound))


def test_solver_failure_is_reported():
    rel = build_dense(wilkinson(), 1)
    bad = SDPSolution("max-iterations", np.zeros(rel.problem.m), float("nan"), float("nan"),
                      float("nan"), 200, [], message="gave up")
    cert = check_flat_and_extract(bad, rel)
    assert cert.status == SOLVER_FAILED
    assert "max-iterations" in cert.diagnostics[0]


def test_polish_keeps_critical_point():
    res = polish(wilkinson(), [0.0])
    assert res.x.tolist() == [0.0]
    assert abs(res.value - sum(1.0 / i for i in range(1, 21))) < 1e-12


def test_polish_two_ratio_sum_matches_root_of_derivative():
    def deriv(x, h=1e-6):
        return (bounds_objective(x + h) - bounds_objective(x - h)) / (2 * h)
    root = brentq(deriv, -1.6, -1.3, xtol=1e-14)
    res = polish(bounds_problem(), [-1.4])
    assert res.converged
    assert abs(res.x[0] - root) < 1e-6
    assert abs(res.x[0] + 1.4215) < 1e-4
    assert res.value <= bounds_objective(-1.4) + 1e-12


@pytest.mark.parametrize("x0", [-3.0, -0.5, 0.0, 0.7, 2.5])
def test_polish_is_monotone(x0):
    prog = bounds_problem(3)
    res = polish(prog, [x0])
    assert res.value <= bounds_objective(x0) + 1e-12
    assert -3.0 <= res.x[0] <= 3.0


def test_polish_aborts_on_vanishing_denominator():
    x = Polynomial.variable(1, 0)
    prog = RationalProgram(1, [RationalTerm(Polynomial.constant(1, 1.0), x)])
    res = polish(prog, [0.0])
    assert res.aborted and res.x.tolist() == [0.0]


def shekel_like():
    A = np.array([[4.0, 4.0], [1.0, 1.0], [8.0, 8.0], [6.0, 6.0]])
    c = np.array([0.1, 0.2, 0.2, 0.4])
    X = [Polynomial.variable(2, j) for j in range(2)]
    one = Polynomial.constant(2, 1.0)
    terms = [RationalTerm(one, sum(((X[j] - float(a[j])) ** 2 for j in range(2)),
                                   Polynomial.zero(2)) + float(ci))
             for a, ci in zip(A, c)]
    cons = [ConstraintPoly(X[j] * (10.0 * one - X[j])) for j in range(2)]
    return RationalProgram(2, terms, cons, sense="maximize"), A, c


def test_polish_refines_four_digits_to_eight():
    prog, A, c = shekel_like()

    def neg(x):
        return -sum(1.0 / (np.sum((x - a) ** 2) + ci) for a, ci in zip(A, c))
    ref = minimize(neg, [4.0, 4.0], method="BFGS", options={"gtol": 1e-12}).x
    start = np.round(ref, 3) + 4e-4
    res = polish(prog, start)
    assert res.converged
    for got, want in zip(res.x, ref):
        assert float(f"{got:.8g}") == pytest.approx(float(f"{want:.8g}"), rel=1e-7)
    assert res.value >= -neg(start) - 1e-12
