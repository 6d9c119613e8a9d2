"""领域模型：场景、决策与市场状态"""
from .exceptions import (
    BoundViolationError,
    ChargenetError,
    DomainError,
    InfeasibleError,
    ReducibleChainError,
    ScenarioValidationError,
    UnstableQueueError,
)
from .scenario import (
    ChargeStationSpec,
    Scenario,
    SwapStationSpec,
    load_scenario,
    load_station_specs,
    validate_scenario,
    validate_station_specs,
)
from .decisions import (
    AugmentedDecision,
    CumulativePlan,
    MarketState,
    OperationalDecision,
    PlanningDecision,
)

__all__ = [
    "BoundViolationError",
    "ChargenetError",
    "DomainError",
    "InfeasibleError",
    "ReducibleChainError",
    "ScenarioValidationError",
    "UnstableQueueError",
    "ChargeStationSpec",
    "Scenario",
    "SwapStationSpec",
    "load_scenario",
    "load_station_specs",
    "validate_scenario",
    "validate_station_specs",
    "AugmentedDecision",
    "CumulativePlan",
    "MarketState",
    "OperationalDecision",
    "PlanningDecision",
]
