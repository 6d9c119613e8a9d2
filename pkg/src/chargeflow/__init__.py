"""充电需求链模块"""
from .chain import (
    demand_matrix,
    energy_balance_residual,
    ev_operating_time,
    feasibility_margin,
    power_iteration,
    solve_stationary,
    stationary_distribution,
    total_charging_rate,
    transition_matrix,
)

__all__ = [
    "demand_matrix",
    "energy_balance_residual",
    "ev_operating_time",
    "feasibility_margin",
    "power_iteration",
    "solve_stationary",
    "stationary_distribution",
    "total_charging_rate",
    "transition_matrix",
]
