"""Semidefinite programs: container, interior-point solver and SDPA interchange."""

from .external import solve_external
from .ipm import solve
from .problem import Block, SDPProblem, SDPSolution
from .sdpa import export_sdpa, import_sdpa, same_structure

__all__ = ["Block", "SDPProblem", "SDPSolution", "solve", "solve_external",
           "export_sdpa", "import_sdpa", "same_structure"]
