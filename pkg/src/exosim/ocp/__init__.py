"""Multi-stage optimal control problems and their multiple-shooting transcription."""
from .problem import (
    BoundaryConstraint,
    Cost,
    Expr,
    IntegrationError,
    OcProblem,
    OdeProblem,
    PathConstraint,
    ProblemError,
    ShootingProblem,
    Stage,
    TerminalTerm,
    integrate_segment,
    state_derivative,
)
from .trajectory import (Trajectory, empty_trajectory, extract_trajectory, read_trajectory_csv,
                         simulate, write_trajectory_csv)
from .transcription import NlpProblem, evaluate_cost, fd_jacobians, transcribe

__all__ = [
    "BoundaryConstraint", "Cost", "Expr", "IntegrationError", "NlpProblem", "OcProblem",
    "OdeProblem", "PathConstraint", "ProblemError", "ShootingProblem", "Stage", "TerminalTerm", "Trajectory", "empty_trajectory",
    "extract_trajectory", "read_trajectory_csv", "simulate", "write_trajectory_csv",
    "evaluate_cost", "fd_jacobians", "integrate_segment", "state_derivative", "transcribe",
]
