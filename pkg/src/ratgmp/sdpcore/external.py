"""Best-effort wrapper around an external SDPA-compatible solver binary.

The binary is called as ``PATH input.dat-s output.out``. The result file is
read in SDPA style (``objValPrimal``, ``xVec``) or, failing that, CSDP style
(the first line holds ``y``). Anything else is a numerical-failure.
"""

from __future__ import annotations

import re
import subprocess
import tempfile
from pathlib import Path

import numpy as np

from .problem import SDPProblem, SDPSolution
from .sdpa import export_sdpa

_NUM = r"[-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?"


def parse_result(text: str, m: int):
    """Return ``(status, y)`` from SDPA or CSDP result text; ``y`` is None on failure."""
    hit = re.search(r"xVec\s*=\s*\{([^}]*)\}", text)
    if hit:
        y = np.array([float(t) for t in re.findall(_NUM, hit.group(1))])
        phase = re.search(r"phase\.value\s*=\s*(\w+)", text)
        status = "optimal" if phase is None or phase.group(1) in ("pdOPT", "pFEAS_dFEAS") else {
            "pINF_dFEAS": "infeasible", "pUNBD": "unbounded", "pFEAS_dINF": "unbounded",
            "dUNBD": "infeasible"}.get(phase.group(1), "numerical-failure")
        return status, y if len(y) == m else None
    first = text.strip().splitlines()[:1]
    if first:
        toks = re.findall(_NUM, first[0])
        if len(toks) == m:
            return "optimal", np.array([float(t) for t in toks])
    return "numerical-failure", None


def solve_external(problem: SDPProblem, binary: str, timeout: float = 600.0) -> SDPSolution:
    m = problem.m
    with tempfile.TemporaryDirectory() as tmp:
        src = Path(tmp) / "problem.dat-s"
        out = Path(tmp) / "problem.out"
        src.write_text(export_sdpa(problem))
        try:
            proc = subprocess.run([binary, str(src), str(out)], capture_output=True,
                                  text=True, timeout=timeout, check=False)
        except (OSError, subprocess.TimeoutExpired) as exc:
            return _failed(m, f"external solver did not run: {exc}")
        text = out.read_text() if out.exists() else proc.stdout
    status, y = parse_result(text, m)
    if y is None:
        return _failed(m, f"could not read a solution (exit code {proc.returncode})")
    obj = float(problem.c @ y)
    return SDPSolution(status, y, obj, float("nan"), float("nan"), 0,
                       problem.min_eigenvalues(y) if problem.blocks else [],
                       problem.equality_residual(y), float("nan"), "external solver")


def _failed(m, message):
    return SDPSolution("numerical-failure", np.zeros(m), float("nan"), float("nan"),
                       float("nan"), 0, [], message=message)
