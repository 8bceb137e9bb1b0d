"""SQP solver for the transcribed optimal control problems."""
from .qp import QpError, QpResult, qp_solve, regularize
from .sqp import (FunctionNlp, NlpSolution, SolverSettings, constraint_violation, kkt_residual,
                  solve_sqp)

__all__ = ["FunctionNlp", "NlpSolution", "QpError", "QpResult", "SolverSettings",
           "constraint_violation", "kkt_residual", "qp_solve", "regularize", "solve_sqp"]
