import csv
import io
import json
import stat
import sys

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import PROBLEMS, bounds_problem
from ratgmp.cli.hierarchy import (HierarchyOptions, emit_report, parse_order_range,
                                  run_hierarchy)
from ratgmp.cli.main import main
from ratgmp.cli.problemfile import ProblemFile, parse_expression, parse_problem
from ratgmp.cli.shekel import read_shekel, shekel_problem
from ratgmp.errors import ModelingError, ParseError
from ratgmp.gmp import EQ, GEQ
from ratgmp.polyalg import Polynomial, monomials_up_to

WILKINSON = (PROBLEMS / "wilkinson.rp").read_text()
SHIPPED = sorted(PROBLEMS.glob("*.rp"))


def test_parse_two_ratio_terms():
    pf = parse_problem("variables: x\n(1+x+x^2) / (1+x^2)\n(1+x^2) / (1+2*x^2)\n")
    expected = bounds_problem()
    assert pf.sense == "minimize"
    assert [(p, q) for p, q in pf.terms] == [(t.numerator, t.denominator) for t in expected.terms]


def test_constant_term_has_unit_denominator():
    pf = parse_problem("variables: x\n5\n")
    assert pf.terms == [(Polynomial.constant(1, 5.0), Polynomial.constant(1, 1.0))]


def test_negative_exponent_reports_position():
    with pytest.raises(ParseError) as e:
        parse_problem("variables: x1 x2 x3\nx1*x2 / x3^-1\n")
    assert e.value.kind == "exponent"
    assert e.value.line == 2
    assert e.value.col == 11


@pytest.mark.parametrize("text,kind", [
    ("variables: x\ny + 1\n", "undeclared"),
    ("variables: x\nx^1.5\n", "exponent"),
    ("variables: x\n1 / x / x\n", "division"),
    ("variables: x\n(1 / x) + 1\n", "division"),
    ("variables: x\nx / 2 >= 0\n1\n", "division"),
    ("variables: x\n1 - x^2 >= 0\n", "empty-objective"),
    ("variables: x\nx + * 2\n", "syntax"),
    ("variables: x\n(x + 1\n", "syntax"),
])
def test_parse_error_kinds(text, kind):
    with pytest.raises(ParseError) as e:
        parse_problem(text)
    assert e.value.kind == kind
    assert e.value.line is not None


def test_relations_and_directives():
    pf = parse_problem(
        "variables: a b\nmaximize\na*b\na^2 <= 1\na - b == 0\nclique: a b\n"
        "option: Order = 2:3\n")
    a, b = Polynomial.variable(2, 0), Polynomial.variable(2, 1)
    assert pf.sense == "maximize"
    assert pf.constraints == [(1.0 - a ** 2, GEQ), (a - b, EQ)]
    assert pf.cliques == [["a", "b"]]
    assert pf.options == {"order": "2:3"}
    assert pf.to_program().pattern.cliques == ((0, 1),)


def test_scientific_numbers_and_unary_minus():
    p = parse_expression("-2.5e-1*x + -(x^2)", ["x"])
    x = Polynomial.variable(1, 0)
    assert p == -0.25 * x - x * x


def test_clique_errors():
    with pytest.raises(ParseError) as e:
        parse_problem("variables: x y\nx\ny\nclique: x\n")
    assert e.value.kind == "clique" and e.value.line == 4
    with pytest.raises(ParseError) as e:
        parse_problem("variables: x y\nx*y\nclique: x\n")
    assert e.value.line == 3
    with pytest.raises(ModelingError):
        parse_problem("variables: x y\nx\ny\nx*y >= 0\nclique: x\nclique: y\n").to_program()


@st.composite
def problem_files(draw):
    n = draw(st.integers(1, 3))
    names = [f"v{j}" for j in range(n)]

    def poly():
        monos = draw(st.lists(st.sampled_from(monomials_up_to(n, 3)), min_size=1, max_size=4,
                              unique=True))
        coefs = draw(st.lists(st.floats(-100, 100, allow_nan=False).filter(lambda v: v != 0),
                              min_size=len(monos), max_size=len(monos)))
        return Polynomial(n, dict(zip(monos, coefs)))
    terms = [(poly(), poly()) for _ in range(draw(st.integers(1, 3)))]
    cons = [(poly(), draw(st.sampled_from([GEQ, EQ]))) for _ in range(draw(st.integers(0, 2)))]
    sense = draw(st.sampled_from(["minimize", "maximize"]))
    return ProblemFile(names, sense, terms, cons)


def close(p, q):
    keys = set(p.terms) | set(q.terms)
    return all(abs(p.coefficient(m) - q.coefficient(m)) <= 1e-12 * max(1.0, abs(p.coefficient(m)))
               for m in keys)


@settings(max_examples=60, deadline=None)
@given(problem_files())
def test_round_trip(pf):
    back = parse_problem(pf.to_text())
    assert back.variables == pf.variables and back.sense == pf.sense
    assert len(back.terms) == len(pf.terms)
    for (p, q), (p2, q2) in zip(pf.terms, back.terms):
        assert close(p, p2) and close(q, q2)
    for (g, rel), (g2, rel2) in zip(pf.constraints, back.constraints):
        assert rel == rel2 and close(g, g2)


def test_order_range_parsing():
    assert parse_order_range("3") == (3, 3)
    assert parse_order_range("0:9") == (0, 9)
    for bad in ("a:b", "1:2:3", "-1:2"):
        with pytest.raises(ModelingError):
            parse_order_range(bad)
    with pytest.raises(ModelingError):
        HierarchyOptions.from_strings({"colour": "red"})


def test_wilkinson_run_and_json():
    report = run_hierarchy(parse_problem(WILKINSON), name="wilkinson")
    assert report.verdict == "certified" and report.exit_code() == 0
    assert len(report.rows) == 1 and report.rows[0].k == 1
    data = json.loads(emit_report(report, "json"))
    assert data["verdict"] == "certified"
    assert len(data["atoms"]) == 1 and abs(data["atoms"][0][0]) < 1e-4
    assert abs(data["bound"] - 3.5977) < 1e-3


def test_reports_are_deterministic():
    a = run_hierarchy(parse_problem(WILKINSON), {"order": "1:2", "all-orders": "true"})
    b = run_hierarchy(parse_problem(WILKINSON), {"order": "1:2", "all-orders": "true"})
    for fmt in ("csv", "json"):
        strip = (lambda t: t) if fmt == "csv" else (
            lambda t: {**json.loads(t), "rows": [{**r, "wall_time": 0}
                                                 for r in json.loads(t)["rows"]]})
        assert strip(emit_report(a, fmt)) == strip(emit_report(b, fmt))
    assert emit_report(a, "json") == emit_report(a, "json")
    assert emit_report(a, "table") == emit_report(a, "table")


def test_csv_format_and_empty_range():
    report = run_hierarchy(parse_problem(WILKINSON), {"order": "3:2"})
    assert emit_report(report, "csv") == "k,bound,status,certified,atoms\n"
    report = run_hierarchy(parse_problem(WILKINSON))
    rows = list(csv.DictReader(io.StringIO(emit_report(report, "csv"))))
    assert rows[0]["certified"] == "true" and rows[0]["status"] == "CertifiedOptimal"
    assert float(rows[0]["atoms"]) == pytest.approx(0.0, abs=1e-4)


def test_table_mentions_verdict():
    text = emit_report(run_hierarchy(parse_problem(WILKINSON)), "table")
    assert "verdict: certified" in text and "certified at k = 1" in text


def test_workers_give_the_same_rows():
    pf = parse_problem((PROBLEMS / "sparse4.rp").read_text())
    one = run_hierarchy(pf, {"order": "1:3", "all-orders": "true"})
    two = run_hierarchy(pf, {"order": "1:3", "all-orders": "true", "workers": "3"})
    assert [r.bound for r in one.rows] == [r.bound for r in two.rows]


def test_orders_below_minimum_are_skipped_with_warning():
    pf = parse_problem("variables: x\n1 / (1 + x^4)\n")
    report = run_hierarchy(pf, {"order": "0:2"})
    assert report.rows[0].k == 2
    assert any("below k_min" in w for w in report.warnings)


@pytest.mark.parametrize("path", SHIPPED, ids=lambda p: p.name)
def test_shipped_examples_parse(path, recwarn):
    pf = parse_problem(path.read_text())
    pf.to_program()
    assert len(recwarn) == 0


@pytest.mark.parametrize("name", ["wilkinson.rp", "bounds.rp", "sparse4.rp"])
def test_shipped_csv_bounds_nondecreasing(name):
    pf = parse_problem((PROBLEMS / name).read_text())
    report = run_hierarchy(pf, {"all-orders": "true"}, name=name)
    rows = list(csv.DictReader(io.StringIO(emit_report(report, "csv"))))
    bounds = [float(r["bound"]) for r in rows]
    sign = -1.0 if pf.sense == "maximize" else 1.0
    slack = 1e-6 * max(1.0, max(abs(b) for b in bounds))
    assert all(sign * (b - a) >= -slack for a, b in zip(bounds, bounds[1:])), bounds


def test_main_exit_codes(tmp_path, capsys):
    wk = tmp_path / "w.rp"
    wk.write_text(WILKINSON)
    assert main([str(wk), "--format", "csv"]) == 0
    assert capsys.readouterr().out.startswith("k,bound,status,certified,atoms\n")
    bp = tmp_path / "b.rp"
    bp.write_text((PROBLEMS / "bounds.rp").read_text())
    assert main([str(bp), "--order", "0:2", "--format", "csv"]) == 2
    capsys.readouterr()
    bad = tmp_path / "bad.rp"
    bad.write_text("variables: x\ny\n")
    assert main([str(bad)]) == 4
    assert "undeclared" in capsys.readouterr().err
    assert main([str(tmp_path / "missing.rp")]) == 4
    assert main([]) == 4


def test_main_solver_failure_exit_code(tmp_path):
    fake = tmp_path / "solver.py"
    fake.write_text(f"#!{sys.executable}\nimport sys\nsys.exit(1)\n")
    fake.chmod(fake.stat().st_mode | stat.S_IEXEC)
    wk = tmp_path / "w.rp"
    wk.write_text(WILKINSON)
    out = tmp_path / "out.json"
    assert main([str(wk), "--solver", f"external:{fake}", "--format", "json", "-o",
                 str(out)]) == 3
    assert json.loads(out.read_text())["verdict"] == "solver-failed"


def test_export_sdpa_directory(tmp_path):
    wk = tmp_path / "w.rp"
    wk.write_text(WILKINSON)
    dest = tmp_path / "sdpa"
    dest.mkdir()
    assert main([str(wk), "--export-sdpa", str(dest), "-o", str(tmp_path / "t.txt")]) == 0
    files = sorted(p.name for p in dest.iterdir())
    assert files == ["w_k1.dat-s"]
    assert (dest / files[0]).read_text().splitlines()[0] == str(
        len((dest / files[0]).read_text().splitlines()[3].split()))


SHEKEL_DATA = """# two foxholes in the plane
4 4
1 1
0.1 0.2
"""


def test_read_shekel():
    A, c = read_shekel(SHEKEL_DATA)
    assert A.tolist() == [[4.0, 4.0], [1.0, 1.0]] and c.tolist() == [0.1, 0.2]
    for bad in ("1 2\n3\n0.1 0.1\n", "1 2\n0.1 0.2\n", "1 2\n-1\n", "1 x\n1\n"):
        with pytest.raises(ParseError):
            read_shekel(bad)


def test_shekel_problem_run(tmp_path, capsys):
    A, c = read_shekel(SHEKEL_DATA)
    pf = shekel_problem(A, c)
    assert pf.sense == "maximize" and pf.n == 2 and len(pf.terms) == 2
    x = np.array([4.0, 4.0])
    prog = pf.to_program()
    assert prog.objective(x) == pytest.approx(1 / 0.1 + 1 / (18 + 0.2))
    report = run_hierarchy(pf, {"order": "2:4"}, name="shekel")
    assert report.verdict == "certified"
    atom = report.certified_row.atoms[0]
    assert np.allclose(atom, [4.0, 4.0], atol=1e-2)
    data = tmp_path / "sh.txt"
    data.write_text(SHEKEL_DATA)
    assert main(["--shekel-data", str(data), "--sparse"]) == 4
