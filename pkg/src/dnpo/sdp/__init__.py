from .program import ConicProgram, PSDBlock, presolve, realify, realify_block
from .sdpa import export_sdpa, import_sdpa
from .solver import Solution, SolverSettings, bounds, project_psd, solve

__all__ = [
    "ConicProgram", "PSDBlock", "presolve", "realify", "realify_block",
    "export_sdpa", "import_sdpa",
    "Solution", "SolverSettings", "bounds", "project_psd", "solve",
]
