"""Command-line front end: problem files, hierarchy runs and reports."""

from .hierarchy import HierarchyOptions, OrderRow, RunReport, emit_report, run_hierarchy
from .problemfile import ProblemFile, parse_expression, parse_problem
from .shekel import read_shekel, shekel_problem

__all__ = ["HierarchyOptions", "OrderRow", "RunReport", "emit_report", "run_hierarchy",
           "ProblemFile", "parse_expression", "parse_problem", "read_shekel", "shekel_problem"]
