"""Problem files, structure files, the command line and the cross-check harness."""
from .check import CheckReport, OracleBudgetError, cross_check
from .io import (
    StructureFormatError,
    dumps_structure,
    format_model,
    read_models,
    read_structure,
    write_models,
    write_structure,
)
from .parser import ParseError, ProblemSpec, format_expr, format_problem, parse_problem

__all__ = [
    "CheckReport", "OracleBudgetError", "cross_check", "StructureFormatError", "dumps_structure",
    "format_model", "read_models", "read_structure", "write_models", "write_structure", "ParseError",
    "ProblemSpec", "format_expr", "format_problem", "parse_problem",
]
