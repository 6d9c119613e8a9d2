"""
原问题求解模块（下界）
"""
from src.optimizer.audit import AuditCheck, AuditReport, audit_solution
from src.optimizer.auglag import ALResult, augmented_lagrangian
from src.optimizer.problem import (
    CHARGING_ONLY,
    MIXED,
    POLICIES,
    SWAPPING_ONLY,
    PlanningProblem,
    StageLayout,
    resolve_policy,
)
from src.optimizer.rounding import rounding_report
from src.optimizer.solver import (
    PlanSolution,
    solve_charging_only,
    solve_gasoline_only,
    solve_original,
)
from src.optimizer.starts import balancing_flows, heuristic_start

__all__ = [
    "ALResult",
    "AuditCheck",
    "AuditReport",
    "CHARGING_ONLY",
    "MIXED",
    "POLICIES",
    "PlanSolution",
    "PlanningProblem",
    "SWAPPING_ONLY",
    "StageLayout",
    "audit_solution",
    "augmented_lagrangian",
    "balancing_flows",
    "heuristic_start",
    "resolve_policy",
    "rounding_report",
    "solve_charging_only",
    "solve_gasoline_only",
    "solve_original",
]
