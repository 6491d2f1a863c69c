from pathlib import Path

import numpy as np
import pytest

from ratgmp.gmp import ConstraintPoly, RationalProgram, RationalTerm, scale_program
from ratgmp.polyalg import Polynomial, VariableScaling

PROBLEMS = Path(__file__).resolve().parent.parent / "problems"


def wilkinson(N=20):
    x = Polynomial.variable(1, 0)
    one = Polynomial.constant(1, 1.0)
    return RationalProgram(1, [RationalTerm(one, x * x + float(i)) for i in range(1, N + 1)],
                           sense="maximize")


def bounds_problem(R=None):
    x = Polynomial.variable(1, 0)
    one = Polynomial.constant(1, 1.0)
    terms = [RationalTerm(one + x + x * x, one + x * x), RationalTerm(one + x * x, one + 2 * x * x)]
    cons = () if R is None else (ConstraintPoly(float(R * R) * one - x * x),)
    return RationalProgram(1, terms, cons)


def bounds_objective(x):
    return (1 + x + x * x) / (1 + x * x) + (1 + x * x) / (1 + 2 * x * x)


def sparse4():
    X = [Polynomial.variable(4, j) for j in range(4)]
    one = Polynomial.constant(4, 1.0)
    terms = [RationalTerm(X[0] * X[j], one) for j in (1, 2, 3)]
    cons = [ConstraintPoly(float(j) * one - X[0] ** 2 - X[j] ** 2) for j in (1, 2, 3)]
    return RationalProgram(4, terms, cons)


def ratex(scaled=True):
    x1, x2 = Polynomial.variable(2, 0), Polynomial.variable(2, 1)
    one = Polynomial.constant(2, 1.0)
    terms = []
    for i in range(1, 11):
        a = x1 ** 4 + x2 ** 2 + 2.0 * i * one
        b = x1 ** 2 + x1 ** 2 * x2 ** 2 + x2 ** 4 + float(i * i) * one
        terms.append(RationalTerm((x1 + x2) * b - (float(i) * x2 ** 2 + one) * a, a * b))
    prog = RationalProgram(2, terms, [ConstraintPoly(one - x1 ** 2),
                                      ConstraintPoly(9.0 * one - x2 ** 2)])
    if scaled:
        prog = scale_program(prog, VariableScaling((1.0, 3.0), (0.0, 0.0)))
    return prog


def rosenbrock(n):
    X = [Polynomial.variable(n, j) for j in range(n)]
    one = Polynomial.constant(n, 1.0)
    terms = [RationalTerm(one, 100 * (X[i + 1] - X[i] ** 2) ** 2 + (X[i] - 1.0) ** 2 + one)
             for i in range(n - 1)]
    cons = [ConstraintPoly(16 * one - X[i] ** 2, origin="bound") for i in range(n)]
    return RationalProgram(n, terms, cons, sense="maximize")


def cvxpy_value(problem):
    """Optimal value of an SDPProblem solved independently with cvxpy/Clarabel."""
    cp = pytest.importorskip("cvxpy")
    y = cp.Variable(problem.m)
    cons = []
    for b in problem.blocks:
        F = np.zeros((b.size, b.size))
        expr = 0
        for v, i, j, a in zip(b.var, b.row, b.col, b.val):
            E = np.zeros((b.size, b.size))
            E[i, j] = a
            E[j, i] = a
            if v < 0:
                F = F + E
            else:
                expr = expr + E * y[int(v)]
        cons.append(F + expr >> 0)
    if problem.n_equalities:
        cons.append(problem.equality_matrix() @ y == problem.eq_rhs)
    prob = cp.Problem(cp.Minimize(problem.c @ y), cons)
    prob.solve(solver="CLARABEL")
    return prob.value, y.value


def pytest_terminal_summary(terminalreporter):
    import sys
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
