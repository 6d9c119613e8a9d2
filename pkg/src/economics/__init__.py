"""
经济模块：时间守恒、车队规模、利润与利用率
"""
from src.economics.kernel import KernelResult, StageKernel
from src.economics.state import (
    charging_downtime,
    evaluate_state,
    ev_utilization,
    fleet_sizes,
    gasoline_state,
    profit,
)

__all__ = [
    "KernelResult",
    "StageKernel",
    "charging_downtime",
    "evaluate_state",
    "ev_utilization",
    "fleet_sizes",
    "gasoline_state",
    "profit",
]
