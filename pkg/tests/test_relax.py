import numpy as np
import pytest

from conftest import (bounds_objective, bounds_problem, cvxpy_value, ratex, rosenbrock, sparse4,
                      wilkinson)
from ratgmp.errors import ModelingError, OrderError, RipWarning
from ratgmp.gmp import (EQ, ConstraintPoly, RationalProgram, RationalTerm, SparsityPattern,
                        infer_cliques)
from ratgmp.polyalg import Polynomial, add_monomials, monomials_up_to
from ratgmp.relax import (build_dense, build_epigraph, build_sparse, lift_program, min_order)
from ratgmp.sdpcore import solve


def sizes(rel, prefix):
    return [size for label, size in rel.block_summary() if label.startswith(prefix)]


def kinds(rel):
    out = {}
    for e in rel.equalities:
        out[e.kind] = out.get(e.kind, 0) + 1
    return out


def test_min_order_examples():
    assert min_order(wilkinson()) == 1
    assert min_order(ratex(scaled=False)) == 4
    assert min_order(sparse4()) == 1


def test_dense_sparse_example_blocks():
    rel = build_dense(sparse4(), 2)
    # the three q = 1 terms share one measure
    assert sizes(rel, "moment") == [15]
    assert sizes(rel, "loc") == [5, 5, 5]


def test_sparse_example_blocks():
    prog = sparse4()
    rel = build_sparse(prog, infer_cliques(prog), 2)
    assert sizes(rel, "moment") == [6, 6, 6]
    assert sizes(rel, "loc") == [3, 3, 3]


def test_two_ratio_sum_order1_structure():
    rel = build_dense(bounds_problem(), 1)
    assert sizes(rel, "moment") == [2, 2]
    assert kinds(rel) == {"normalize": 1, "match": 1}
    norm = rel.problem.equality_matrix().toarray()[0]
    # L_{y_1}(1 + x^2) = 1 touches y_0 and y_{x^2} of the first measure
    assert norm[rel.indexing.index(0, (0,))] == 1.0
    assert norm[rel.indexing.index(0, (2,))] == 1.0


def test_wilkinson_order1_structure():
    rel = build_dense(wilkinson(), 1, merge=False)
    assert sizes(rel, "moment") == [2] * 20
    assert kinds(rel) == {"normalize": 1, "match": 19}


def test_order_and_input_errors():
    with pytest.raises(OrderError):
        build_dense(ratex(), 3)
    with pytest.raises(ModelingError):
        build_sparse(sparse4(), None, 2)
    with pytest.raises(ModelingError):
        lift_program(wilkinson(), "equality", None)
    with pytest.raises(ModelingError):
        lift_program(wilkinson(), "sideways", (0.0, 1.0))


def test_single_clique_sparse_equals_dense():
    prog = sparse4()
    pat = SparsityPattern(((0, 1, 2, 3),), ((0, 1, 2),))
    merged = RationalProgram(4, [RationalTerm(sum((t.numerator for t in prog.terms),
                                                  Polynomial.zero(4)),
                                              Polynomial.constant(4, 1.0))], prog.constraints)
    sp = build_sparse(merged, pat, 2)
    dn = build_dense(merged, 2)
    assert sp.block_summary() == dn.block_summary()
    for a, b in zip(sp.problem.blocks, dn.problem.blocks):
        assert np.array_equal(a.var, b.var) and np.array_equal(a.val, b.val)


def test_rosenbrock_linking_is_mass_matching():
    prog = rosenbrock(3)
    rel = build_sparse(prog, infer_cliques(prog), 2)
    links = [e for e in rel.equalities if e.kind == "link"]
    assert len(links) == 1
    assert links[0].monomial in (None, (0,), ())


def test_rip_failure_warns():
    X = [Polynomial.variable(4, j) for j in range(4)]
    one = Polynomial.constant(4, 1.0)
    prog = RationalProgram(4, [RationalTerm(X[0] * X[1], one), RationalTerm(X[2] * X[3], one),
                               RationalTerm(X[1] * X[2], one)])
    with pytest.warns(RipWarning):
        build_sparse(prog, infer_cliques(prog), 1)


def test_moment_and_localizing_entry_laws():
    prog = sparse4()
    rel = build_dense(prog, 2)
    rng = np.random.default_rng(7)
    y = rng.normal(size=rel.problem.m)
    mom = rel.indexing.moments(y, 0)
    mats = rel.problem.block_matrices(y)
    for info, M in zip(rel.blocks, mats):
        assert np.array_equal(M, M.T)
        rows = monomials_up_to(4, info.degree)
        if info.constraint is None:
            expect = np.array([[mom[add_monomials(a, b)] for b in rows] for a in rows])
        else:
            g = prog.constraints[info.constraint].g
            expect = np.array([[sum(c * mom[add_monomials(add_monomials(m, a), b)]
                                    for m, c in g.items()) for b in rows] for a in rows])
        assert np.allclose(M, expect, rtol=0, atol=1e-12)


def test_sparse_entry_laws_use_private_copies():
    prog = sparse4()
    rel = build_sparse(prog, infer_cliques(prog), 2)
    y = np.random.default_rng(3).normal(size=rel.problem.m)
    mats = rel.problem.block_matrices(y)
    for info, M in zip(rel.blocks, mats):
        mom = rel.indexing.moments(y, info.measure)
        rows = monomials_up_to(2, info.degree)
        if info.constraint is None:
            expect = np.array([[mom[add_monomials(a, b)] for b in rows] for a in rows])
            assert np.allclose(M, expect, atol=1e-12)
    spans = [rel.indexing.span(i) for i in range(3)]
    assert spans[0].stop == spans[1].start and spans[1].stop == spans[2].start


def test_equality_constraints_become_localizing_equalities():
    x = Polynomial.variable(2, 0)
    r = Polynomial.variable(2, 1)
    one = Polynomial.constant(2, 1.0)
    prog = RationalProgram(2, [RationalTerm(r, one)],
                           [ConstraintPoly(r - x * x, EQ), ConstraintPoly(one - x * x)])
    rel = build_dense(prog, 2)
    assert kinds(rel)["localize"] == len(monomials_up_to(2, 2))
    assert sizes(rel, "loc") == [3]


def test_epigraph_single_term_optimum():
    x = Polynomial.variable(1, 0)
    one = Polynomial.constant(1, 1.0)
    prog = RationalProgram(1, [RationalTerm(x * x, one)], [ConstraintPoly(one - x * x)])
    lifted = lift_program(prog, "equality", (0.0, 1.0))
    r = Polynomial.variable(2, 1)
    assert lifted.constraints[1].g == r - Polynomial.variable(2, 0) ** 2
    assert lifted.constraints[1].relation == EQ
    rel = build_epigraph(prog, 1, "equality", (0.0, 1.0))
    sol = solve(rel.problem)
    assert sol.status == "optimal"
    assert abs(rel.bound(sol.objective)) < 1e-6


def test_epigraph_uses_lifted_cliques():
    prog = wilkinson()
    prog = prog.replace(pattern=infer_cliques(prog))
    lifted = lift_program(prog, "equality", (0.0, 1.0))
    assert lifted.pattern.cliques[0] == (0, 1)
    assert lifted.pattern.cliques[19] == (0, 20)
    rel = build_epigraph(prog, 2, "inequality", (0.0, 1.0))
    assert rel.kind == "epigraph-sparse"


def test_relaxation_values_match_independent_oracle():
    for rel in (build_dense(bounds_problem(3), 2), build_dense(sparse4(), 2),
                build_sparse(sparse4(), infer_cliques(sparse4()), 2),
                build_dense(wilkinson(), 1)):
        ours = solve(rel.problem)
        ref, _ = cvxpy_value(rel.problem)
        assert ours.status == "optimal"
        assert abs(ours.objective - ref) <= 1e-6 * (1 + abs(ref))


def feasible_points(prog, count, rng, box=3.0):
    pts = []
    while len(pts) < count:
        x = rng.uniform(-box, box, size=prog.n)
        if prog.feasible(x, 0.0):
            pts.append(x)
    return pts


@pytest.mark.parametrize("name,prog,rel", [
    ("bounds R=3", bounds_problem(3), lambda p: build_dense(p, 3)),
    ("sparse4 dense", sparse4(), lambda p: build_dense(p, 2)),
    ("sparse4 sparse", sparse4(), lambda p: build_sparse(p, infer_cliques(p), 2)),
    ("ratex", ratex(), lambda p: build_dense(p, 4)),
])
def test_lower_bound_property(name, prog, rel):
    r = rel(prog)
    sol = solve(r.problem)
    assert sol.status == "optimal"
    bound = r.bound(sol.objective)
    rng = np.random.default_rng(11)
    for x in feasible_points(prog, 50, rng, box=1.0 if name == "ratex" else 3.0):
        assert bound <= prog.objective(x) + 1e-6


def test_upper_bound_property_for_maximization():
    prog = wilkinson()
    r = build_dense(prog, 1)
    bound = r.bound(solve(r.problem).objective)
    for x in np.linspace(-4, 4, 50):
        assert bound >= prog.objective([x]) - 1e-6


def test_monotone_in_order_on_bounded_interval():
    prog = bounds_problem(4)
    vals = [build_dense(prog, k) for k in range(1, 6)]
    vals = [r.bound(solve(r.problem).objective) for r in vals]
    assert all(b >= a - 1e-7 for a, b in zip(vals, vals[1:]))
    assert vals[-1] <= bounds_objective(-1.4215) + 1e-6


def test_dense_sparse_agree_on_example():
    prog = sparse4()
    d = build_dense(prog, 2)
    s = build_sparse(prog, infer_cliques(prog), 2)
    vd = d.bound(solve(d.problem).objective)
    vs = s.bound(solve(s.problem).objective)
    assert abs(vd - vs) <= 1e-5
