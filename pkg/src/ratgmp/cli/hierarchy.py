"""Run a relaxation hierarchy across an order range and collect the results."""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from ..certify import BOUND_ONLY, CERTIFIED, SOLVER_FAILED, check_flat_and_extract, polish
from ..errors import ModelingError, RipWarning
from ..gmp import (GEQ, ConstraintPoly, RationalProgram, add_ball_constraints,
                   check_rip, infer_cliques, scale_program)
from ..polyalg import Polynomial, VariableScaling
from ..relax import build_dense, build_epigraph, build_sparse, lift_program, min_order
from ..sdpcore import export_sdpa, solve, solve_external
from .problemfile import ProblemFile, pattern_from_cliques

log = logging.getLogger(__name__)

VERDICT_CERTIFIED = "certified"
VERDICT_BOUNDS = "bounds-only"
VERDICT_FAILED = "solver-failed"


# ---------------------------------------------------------------- options

def _pair(text: str, what: str):
    parts = text.split(":")
    if len(parts) != 2:
        raise ModelingError(f"{what}: expected 'lo:hi', got {text!r}")
    try:
        return float(parts[0]), float(parts[1])
    except ValueError:
        raise ModelingError(f"{what}: expected numbers in {text!r}") from None


def parse_order_range(text: str):
    parts = text.split(":")
    try:
        vals = [int(p) for p in parts]
    except ValueError:
        raise ModelingError(f"order range must be 'A' or 'A:B', got {text!r}") from None
    if len(vals) == 1:
        vals = vals * 2
    if len(vals) != 2 or vals[0] < 0:
        raise ModelingError(f"order range must be 'A' or 'A:B', got {text!r}")
    return vals[0], vals[1]


def parse_variable_specs(items, what: str) -> dict:
    """``["x1:a:b", ...]`` (or one comma/space separated string) to ``{name: (a, b)}``."""
    if isinstance(items, str):
        items = items.replace(",", " ").split()
    out = {}
    for item in items:
        for piece in item.replace(",", " ").split():
            name, _, rest = piece.partition(":")
            if not rest:
                raise ModelingError(f"{what}: expected 'name:a:b', got {piece!r}")
            out[name] = _pair(rest, what)
    return out


def _flag(value) -> bool:
    if isinstance(value, bool):
        return value
    v = str(value).strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ModelingError(f"expected a boolean, got {value!r}")


@dataclass
class HierarchyOptions:
    orders: tuple | None = None        # inclusive (first, last); None means k_min .. k_min + 5
    sparse: bool = False
    infer_cliques: bool = False
    epigraph: str | None = None        # inequality | equality
    lift_bounds: tuple | None = None
    ball: float | None = None
    bounds: dict = field(default_factory=dict)
    scale: dict = field(default_factory=dict)
    ranktol: float = 1e-3
    solver: str = "internal"
    export_sdpa: str | None = None
    all_orders: bool = False
    seed: int = 0
    match_sweep: bool = False
    polish: bool = False
    workers: int = 1

    _ALIASES = {"order": "orders", "lift-bounds": "lift_bounds", "infer-cliques": "infer_cliques",
                "all-orders": "all_orders", "match-sweep": "match_sweep",
                "export-sdpa": "export_sdpa"}

    @classmethod
    def from_strings(cls, values: dict, base: "HierarchyOptions | None" = None):
        """Apply ``option: key = value`` strings (file options) on top of ``base``."""
        opts = base if base is not None else cls()
        names = {f.name for f in fields(cls)}
        for raw_key, raw in values.items():
            key = cls._ALIASES.get(raw_key, raw_key.replace("-", "_"))
            if key not in names:
                raise ModelingError(f"unknown option {raw_key!r}")
            opts.set(key, raw)
        return opts

    def set(self, key: str, raw) -> None:
        if raw is None:
            return
        if key == "orders":
            val = parse_order_range(raw) if isinstance(raw, str) else tuple(raw)
        elif key == "lift_bounds":
            val = _pair(raw, "lift bounds") if isinstance(raw, str) else tuple(raw)
        elif key in ("bounds", "scale"):
            val = parse_variable_specs(raw, key) if not isinstance(raw, dict) else raw
            val = {**getattr(self, key), **val}
        elif key == "epigraph":
            val = {"ineq": "inequality", "eq": "equality"}.get(str(raw), str(raw))
            if val not in ("inequality", "equality"):
                raise ModelingError(f"epigraph mode must be ineq or eq, got {raw!r}")
        elif key in ("ball", "ranktol"):
            val = float(raw)
        elif key in ("seed", "workers"):
            val = int(raw)
        elif key in ("sparse", "infer_cliques", "all_orders", "match_sweep", "polish"):
            val = _flag(raw)
        else:
            val = str(raw)
        setattr(self, key, val)

    def echo(self) -> dict:
        d = asdict(self)
        d["orders"] = list(self.orders) if self.orders is not None else None
        d["lift_bounds"] = list(self.lift_bounds) if self.lift_bounds is not None else None
        d["bounds"] = {k: list(v) for k, v in sorted(self.bounds.items())}
        d["scale"] = {k: list(v) for k, v in sorted(self.scale.items())}
        return d


# ---------------------------------------------------------------- report

@dataclass
class OrderRow:
    k: int                       # row index: relaxation order, or matching degree in a sweep
    order: int                   # relaxation order actually built
    bound: float
    solver_status: str
    iterations: int
    ranks: list                  # [rank M_s, rank M_{s-offset}] per measure
    overlap_ranks: dict
    status: str                  # certificate status
    atoms: list                  # original coordinates
    approximate: bool = False    # atoms are a first-moment estimate, not certified
    values: list = field(default_factory=list)
    refined: list | None = None
    wall_time: float = 0.0
    diagnostics: list = field(default_factory=list)

    @property
    def certified(self) -> bool:
        return self.status == CERTIFIED


@dataclass
class RunReport:
    name: str
    mode: str
    sense: str
    k_min: int
    rows: list = field(default_factory=list)
    warnings: list = field(default_factory=list)
    options: dict = field(default_factory=dict)

    @property
    def verdict(self) -> str:
        if any(r.certified for r in self.rows):
            return VERDICT_CERTIFIED
        if any(r.status != SOLVER_FAILED for r in self.rows):
            return VERDICT_BOUNDS
        return VERDICT_FAILED

    @property
    def certified_row(self) -> OrderRow | None:
        return next((r for r in self.rows if r.certified), None)

    def bounds(self) -> list:
        return [r.bound for r in self.rows]

    def exit_code(self) -> int:
        return {VERDICT_CERTIFIED: 0, VERDICT_BOUNDS: 2, VERDICT_FAILED: 3}[self.verdict]


# ---------------------------------------------------------------- program assembly

def _index(names, name, what):
    if name not in names:
        raise ModelingError(f"{what}: unknown variable {name!r}")
    return names.index(name)


def prepare_program(pf: ProblemFile, opts: HierarchyOptions, warn_list=None) -> RationalProgram:
    """Apply bounds, scaling, sparsity and ball options to the parsed problem."""
    names = list(pf.variables)
    n = len(names)
    base = pf.to_program().replace(pattern=None)
    cons = list(base.constraints)
    for name, (lo, hi) in sorted(opts.bounds.items(), key=lambda kv: _index(names, kv[0], "bounds")):
        j = _index(names, name, "bounds")
        if not lo <= hi:
            raise ModelingError(f"bounds for {name}: {lo} > {hi}")
        x = Polynomial.variable(n, j)
        cons.append(ConstraintPoly((x - lo) * (Polynomial.constant(n, hi) - x), GEQ, "bound"))
    prog = base.replace(constraints=tuple(cons))
    if opts.scale:
        a, b = [1.0] * n, [0.0] * n
        for name, (aj, bj) in opts.scale.items():
            j = _index(names, name, "scale")
            a[j], b[j] = aj, bj
        prog = scale_program(prog, VariableScaling(tuple(a), tuple(b)))
    if opts.sparse:
        if pf.cliques:
            idx = [[names.index(v) for v in c] for c in pf.cliques]
            pattern = pattern_from_cliques(idx, prog.constraints)
        elif opts.infer_cliques:
            pattern = infer_cliques(prog)
        else:
            raise ModelingError("sparse mode needs clique declarations or --infer-cliques")
        prog = prog.replace(pattern=pattern)
        bad = check_rip(pattern)
        if bad is not None and warn_list is not None:
            warn_list.append(f"running intersection property fails at clique {bad + 1}")
    if opts.ball is not None:
        prog = add_ball_constraints(prog, opts.ball, "per-clique" if opts.sparse else "dense")
    return prog


def _lift_bounds(prog, opts):
    if opts.lift_bounds is None:
        raise ModelingError("epigraph mode needs --lift-bounds lo:hi")
    return opts.lift_bounds


def first_order(prog: RationalProgram, opts: HierarchyOptions) -> int:
    if opts.epigraph:
        return min_order(lift_program(prog, opts.epigraph, _lift_bounds(prog, opts)))
    return min_order(prog)


def _relaxation_order(prog, opts, k, k_min):
    """Relaxation order for row ``k``; in a sweep ``k`` is the matching degree."""
    if not opts.match_sweep:
        return k
    qdeg = max(t.denominator.degree for t in prog.terms)
    return max(k_min, math.ceil((k + qdeg) / 2))


def build(prog: RationalProgram, opts: HierarchyOptions, k: int, k_min: int):
    order = _relaxation_order(prog, opts, k, k_min)
    match = k if opts.match_sweep else None
    if opts.epigraph:
        return build_epigraph(prog, order, opts.epigraph, _lift_bounds(prog, opts))
    if opts.sparse:
        return build_sparse(prog, prog.pattern, order, match_degree=match)
    return build_dense(prog, order, match_degree=match)


def _to_original(prog: RationalProgram, pt) -> list:
    z = np.asarray(pt, dtype=float)[:prog.n]
    x = prog.scaling.to_original(z) if prog.scaling is not None else z
    return [float(v) for v in x]


def run_order(prog: RationalProgram, opts: HierarchyOptions, k: int, k_min: int,
              name: str = "problem") -> OrderRow:
    t0 = time.perf_counter()
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RipWarning)
        rel = build(prog, opts, k, k_min)
    if opts.export_sdpa:
        out = Path(opts.export_sdpa)
        out.mkdir(parents=True, exist_ok=True)
        (out / f"{name}_k{k}.dat-s").write_text(export_sdpa(rel.problem))
    if opts.solver.startswith("external:"):
        sol = solve_external(rel.problem, opts.solver.split(":", 1)[1])
    elif opts.solver == "internal":
        sol = solve(rel.problem, seed=opts.seed)
    else:
        raise ModelingError(f"unknown solver {opts.solver!r}")
    cert = check_flat_and_extract(sol, rel, tol=opts.ranktol, seed=opts.seed)
    ranks = [[m.rank, m.sub_rank] for m in cert.profile.measures] if cert.profile else []
    overlaps = ({f"{i + 1}-{j + 1}": r for (i, j), r in sorted(cert.profile.overlaps.items())}
                if cert.profile else {})
    row = OrderRow(k, rel.order, float(cert.bound), sol.status, int(sol.iterations), ranks,
                   overlaps, cert.status, [], diagnostics=list(cert.diagnostics))
    if cert.certified:
        pts = [np.asarray(a)[:prog.n] for a in cert.atoms]
    elif cert.approximate is not None and cert.status == BOUND_ONLY:
        for a in cert.atoms:
            row.diagnostics.append("rejected atom " + _point(_to_original(prog, a)))
        pts = [np.asarray(cert.approximate)[:prog.n]]
        row.approximate = True
    else:
        pts = []
    row.values = [float(prog.objective(p)) for p in pts]
    row.atoms = [_to_original(prog, p) for p in pts]
    if opts.polish and pts:
        row.refined = []
        for p in pts:
            res = polish(prog, p)
            row.refined.append({"x": _to_original(prog, res.x), "value": res.value,
                                "converged": bool(res.converged)})
    row.wall_time = time.perf_counter() - t0
    log.info("k=%d order=%d bound=%.8g %s (%s, %d it, %.2fs)", k, rel.order, row.bound,
             row.status, sol.status, sol.iterations, row.wall_time)
    return row


def run_hierarchy(pf: ProblemFile, overrides: HierarchyOptions | dict | None = None,
                  name: str = "problem") -> RunReport:
    """Solve the hierarchy for ``pf`` with file options overridden by ``overrides``."""
    opts = HierarchyOptions.from_strings(pf.options)
    if isinstance(overrides, HierarchyOptions):
        for f in fields(HierarchyOptions):
            val = getattr(overrides, f.name)
            if val != getattr(HierarchyOptions(), f.name):
                setattr(opts, f.name, val)
    elif overrides:
        opts = HierarchyOptions.from_strings(overrides, opts)
    notes: list = []
    prog = prepare_program(pf, opts, notes)
    k_min = first_order(prog, opts)
    mode = ("epigraph-" + opts.epigraph) if opts.epigraph else ("sparse" if opts.sparse else "dense")
    report = RunReport(name, mode, prog.sense, k_min, warnings=notes, options=opts.echo())
    if opts.orders is not None:
        lo, hi = opts.orders
    else:
        lo = 0 if opts.match_sweep else k_min
        hi = lo + 5
    ks = list(range(lo, hi + 1))
    if not opts.match_sweep:
        below = [k for k in ks if k < k_min]
        if below:
            report.warnings.append(f"orders {below} are below k_min = {k_min} and were skipped")
            ks = [k for k in ks if k >= k_min]
    if opts.workers > 1 and len(ks) > 1:
        with ThreadPoolExecutor(max_workers=opts.workers) as pool:
            rows = list(pool.map(lambda k: run_order(prog, opts, k, k_min, name), ks))
        for row in rows:
            report.rows.append(row)
            if row.certified and not opts.all_orders:
                break
    else:
        for k in ks:
            row = run_order(prog, opts, k, k_min, name)
            report.rows.append(row)
            if row.certified and not opts.all_orders:
                break
    return report


# ---------------------------------------------------------------- output

def _num(v: float) -> str:
    return "nan" if not np.isfinite(v) else format(v, ".10g")


def _point(p) -> str:
    return " ".join(format(v, ".8g") for v in p)


def _ranks_field(ranks) -> str:
    out = []
    for a, b in ranks:
        label = f"{a}/{b}"
        if out and out[-1][0] == label:
            out[-1][1] += 1
        else:
            out.append([label, 1])
    return " ".join(lab if cnt == 1 else f"{lab}x{cnt}" for lab, cnt in out)


def _atoms_field(row: OrderRow) -> str:
    text = "; ".join(_point(p) for p in row.atoms)
    return ("~" + text) if row.approximate and text else text


def _clean(obj):
    if isinstance(obj, float):
        return obj if math.isfinite(obj) else None
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.generic):
        return _clean(obj.item())
    return obj


def report_dict(report: RunReport) -> dict:
    cert = report.certified_row
    rows = []
    for r in report.rows:
        d = asdict(r)
        d["certified"] = r.certified
        rows.append(d)
    return _clean({
        "name": report.name, "mode": report.mode, "sense": report.sense, "k_min": report.k_min,
        "verdict": report.verdict, "bound": report.rows[-1].bound if report.rows else None,
        "certified_order": cert.k if cert else None,
        "atoms": cert.atoms if cert else [],
        "warnings": report.warnings, "options": report.options, "rows": rows,
    })


def emit_report(report: RunReport, fmt: str = "table") -> str:
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["k", "bound", "status", "certified", "atoms"])
        for r in report.rows:
            w.writerow([r.k, _num(r.bound), r.status, "true" if r.certified else "false",
                        _atoms_field(r)])
        return buf.getvalue()
    if fmt == "json":
        return json.dumps(report_dict(report), indent=2, sort_keys=True) + "\n"
    if fmt != "table":
        raise ValueError(f"unknown format {fmt!r}")
    head = ["k", "order", "bound", "solver", "iter", "ranks", "certificate", "atoms", "time"]
    body = []
    for r in report.rows:
        ranks = _ranks_field(r.ranks)
        body.append([str(r.k), str(r.order), _num(r.bound), r.solver_status, str(r.iterations),
                     ranks, r.status, _atoms_field(r), f"{r.wall_time:.2f}s"])
    widths = [max(len(h), *(len(b[i]) for b in body)) if body else len(h)
              for i, h in enumerate(head)]
    lines = [f"{report.name}: {report.sense}, {report.mode}, k_min = {report.k_min}"]
    lines.append("  ".join(h.ljust(w) for h, w in zip(head, widths)).rstrip())
    lines.append("  ".join("-" * w for w in widths))
    lines += ["  ".join(c.ljust(w) for c, w in zip(b, widths)).rstrip() for b in body]
    lines += [f"warning: {w}" for w in report.warnings]
    lines.append(f"verdict: {report.verdict}")
    cert = report.certified_row
    if cert is not None:
        lines.append(f"certified at k = {cert.k}: f* = {_num(cert.bound)}")
    return "\n".join(lines) + "\n"
