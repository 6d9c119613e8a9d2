"""
异常定义模块
"""
from typing import Optional


class ChargenetError(Exception):
    """所有业务异常的基类"""


class ScenarioValidationError(ChargenetError, ValueError):
    """场景文件不满足约束，field 指出第一个被违反的约束"""

    def __init__(self, field: str, message: str):
        self.field = field
        self.message = message
        super().__init__(f"{field}: {message}")


class DomainError(ChargenetError, ValueError):
    """参数超出运算的定义域"""


class ReducibleChainError(DomainError):
    """转移矩阵可约，平稳分布不唯一"""


class InfeasibleError(ChargenetError):
    """决策或实例不可行"""

    def __init__(self, message: str, constraint: Optional[str] = None):
        self.constraint = constraint
        super().__init__(message if constraint is None else f"{constraint}: {message}")


class UnstableQueueError(ChargenetError):
    """充电排队系统利用率 ρ >= 1"""

    def __init__(self, rho: float):
        self.rho = rho
        super().__init__(f"充电站排队不稳定: ρ={rho:.6g} >= 1")


class BoundViolationError(ChargenetError):
    """上界低于下界（弱对偶被破坏，属于实现错误）"""

    def __init__(self, lower: float, upper: float):
        self.lower = lower
        self.upper = upper
        super().__init__(f"上界 {upper:.10g} 低于下界 {lower:.10g}")
