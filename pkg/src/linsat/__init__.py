"""Differentiable projection onto positive linear constraints via multi-set Sinkhorn."""

from .constraints import (
    InvalidSystemError,
    LinearConstraintSystem,
    MarginalStack,
    compile_to_marginals,
    validate_system,
)
from .layer import ProjectionResult, linsat, project, project_backward
from .sinkhorn import (
    ConvergenceReport,
    MarginalSets,
    SolverConfig,
    TransportPlan,
    classic_sinkhorn,
    multi_set_sinkhorn,
)

__all__ = [
    "ConvergenceReport",
    "InvalidSystemError",
    "LinearConstraintSystem",
    "MarginalSets",
    "MarginalStack",
    "ProjectionResult",
    "SolverConfig",
    "TransportPlan",
    "classic_sinkhorn",
    "compile_to_marginals",
    "linsat",
    "multi_set_sinkhorn",
    "project",
    "project_backward",
    "validate_system",
]

__version__ = "0.1.0"
