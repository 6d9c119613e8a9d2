"""松弛重构、拉格朗日分解与上界"""
from .reformulation import (
    Multipliers,
    h_residuals,
    lagrangian_constant,
    partial_lagrangian,
    zone_lagrangian,
)
from .relaxed import RelaxedSolution, recover_multipliers, snap_budgets, solve_relaxed
from .subproblem import (
    SubproblemInstance,
    SubproblemResult,
    ZoneGrid,
    ZonePoint,
    build_zone_grid,
    margin_floor,
    refinement_margin,
    solve_subproblem,
    station_value,
)
from .upper_bound import UpperBoundResult, build_instances, solve_all, upper_bound
from .report import (
    OptimalityReport,
    certify,
    comparison_deltas,
    gap_percent,
    optimality_report,
)

__all__ = [
    "Multipliers",
    "h_residuals",
    "lagrangian_constant",
    "partial_lagrangian",
    "zone_lagrangian",
    "RelaxedSolution",
    "recover_multipliers",
    "snap_budgets",
    "solve_relaxed",
    "SubproblemInstance",
    "SubproblemResult",
    "ZoneGrid",
    "ZonePoint",
    "build_zone_grid",
    "margin_floor",
    "refinement_margin",
    "solve_subproblem",
    "station_value",
    "UpperBoundResult",
    "build_instances",
    "solve_all",
    "upper_bound",
    "OptimalityReport",
    "certify",
    "comparison_deltas",
    "gap_percent",
    "optimality_report",
]
