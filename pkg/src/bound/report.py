"""
最优性报告

串联下界、松弛问题、乘子与上界，给出最优性间隙以及部署、轨迹和模式对比表。
"""
from dataclasses import dataclass
from typing import Any, Dict, List, Optional, Sequence

from src.bound.reformulation import Multipliers
from src.bound.relaxed import RelaxedSolution, solve_relaxed
from src.bound.upper_bound import UpperBoundResult, upper_bound
from src.config.solver_config import SolverConfig, load_solver_config
from src.model.exceptions import BoundViolationError
from src.model.scenario import Scenario
from src.optimizer.problem import CHARGING_ONLY
from src.optimizer.solver import PlanSolution, solve_original
from src.queues.swapping import SwapWaitTable, get_swap_table
from src.utils import app_logger

# 弱对偶断言的相对容差（仅吸收浮点舍入）
DUALITY_TOL = 1e-9


def gap_percent(lower: float, upper: float) -> float:
    """最优性间隙 (UB − LB)/LB，百分比"""
    if upper == lower:
        return 0.0
    if lower == 0:
        return float("inf")
    return float(100.0 * (upper - lower) / abs(lower))


@dataclass
class OptimalityReport:
    """一次完整求解（下界 + 上界）的结果"""
    scenario: Scenario
    lower: PlanSolution
    upper: UpperBoundResult
    relaxed: Optional[RelaxedSolution] = None
    multipliers: Optional[Multipliers] = None

    @property
    def mode(self) -> str:
        return self.lower.mode

    @property
    def lower_bound(self) -> float:
        return self.lower.lower_bound

    @property
    def upper_bound(self) -> float:
        return self.upper.value

    @property
    def gap_pct(self) -> float:
        return gap_percent(self.lower_bound, self.upper_bound)

    def bounds_row(self) -> Dict[str, Any]:
        """bounds.csv 的一行"""
        return {
            "scenario": self.scenario.name,
            "mode": self.mode,
            "budget": float(self.scenario.total_budget),
            "LB": self.lower_bound,
            "UB": self.upper_bound,
            "gap_pct": self.gap_pct,
            "ub_margin": self.upper.margin,
            "refined": self.upper.refined_all,
            "ill_conditioned": bool(self.multipliers.ill_conditioned) if self.multipliers else False,
        }

    def summary_row(self) -> Dict[str, Any]:
        """comparison.csv 的一行"""
        return {
            "budget": float(self.scenario.total_budget),
            "mode": self.mode,
            "total_profit": self.lower_bound,
            "long_run_profit": self.lower.long_run_profit,
            "avg_utilization": self.lower.avg_utilization,
            "long_run_utilization": self.lower.long_run_utilization,
        }

    def deployment_rows(self) -> List[Dict[str, Any]]:
        return [{"budget": float(self.scenario.total_budget), "mode": self.mode, **row}
                for row in self.lower.deployment_rows()]

    def trace_rows(self) -> List[Dict[str, Any]]:
        return [{"budget": float(self.scenario.total_budget), **row} for row in self.lower.trace_rows()]

    def to_dict(self) -> Dict[str, Any]:
        return {
            "bounds": self.bounds_row(),
            "solution": self.lower.to_dict(),
            "relaxed": self.relaxed.to_dict() if self.relaxed else None,
            "multipliers": self.multipliers.to_dict() if self.multipliers else None,
            "upper_bound": self.upper.to_dict(),
        }


def optimality_report(lower: PlanSolution, upper: UpperBoundResult,
                      relaxed: Optional[RelaxedSolution] = None,
                      multipliers: Optional[Multipliers] = None) -> OptimalityReport:
    """
    由已计算的上下界生成报告

    Raises:
        BoundViolationError: 上界低于下界超出浮点舍入
    """
    lb, ub = lower.lower_bound, upper.value
    if ub < lb - DUALITY_TOL * max(1.0, abs(lb)):
        app_logger.error(f"弱对偶检查失败: LB={lb:.10g}, UB={ub:.10g}")
        raise BoundViolationError(lb, ub)
    report = OptimalityReport(scenario=lower.scenario, lower=lower, upper=upper,
                              relaxed=relaxed, multipliers=multipliers)
    app_logger.info(
        f"场景 {lower.scenario.name}（{lower.mode}，预算 {lower.scenario.total_budget:g}）: "
        f"LB={lb:.6g}, UB={ub:.6g}, 间隙={report.gap_pct:.3f}%"
    )
    return report


def certify(scenario: Scenario, config: Optional[SolverConfig] = None, mode: str = "joint",
            policy: Optional[Sequence[str]] = None, warm_starts: Sequence[PlanSolution] = (),
            swap_table: Optional[SwapWaitTable] = None, workers: Optional[int] = None,
            lower: Optional[PlanSolution] = None) -> OptimalityReport:
    """
    完整流程：原问题（下界）→ 松弛问题与乘子 → 子问题（上界）→ 报告

    Args:
        scenario: 场景
        config: 求解器配置
        mode: joint 或 charging_only
        policy: 逐区域策略限制
        warm_starts: 下界求解的热启动解
        swap_table: 换电等待插值表
        workers: 并行进程数
        lower: 已有的下界解（给出时跳过原问题求解）

    Returns:
        OptimalityReport
    """
    config = config or load_solver_config()
    if lower is None:
        lower = solve_original(scenario, config, mode=mode, policy=policy, warm_starts=warm_starts,
                               swap_table=swap_table, workers=workers)
    if swap_table is None and any(item != CHARGING_ONLY for item in lower.policy):
        swap_table = get_swap_table(scenario.swap_spec, scenario.charge_spec.tau_c,
                                    config.optimizer.swap_load_factor)

    relaxed, multipliers = solve_relaxed(scenario, config, lower=lower, swap_table=swap_table)
    anchors = [
        (lower.plan, lower.operations, lower.charging_demand()),
        (relaxed.plan, relaxed.operations, relaxed.k),
    ]
    upper = upper_bound(scenario, multipliers, config.grid, anchors, config,
                        policy=lower.policy, swap_table=swap_table, workers=workers)
    return optimality_report(lower, upper, relaxed, multipliers)


def comparison_deltas(joint: OptimalityReport, charging: OptimalityReport) -> Dict[str, Any]:
    """同一预算下联合部署相对仅充电站的提升"""

    def pct(a: float, b: float) -> Optional[float]:
        return None if b == 0 else float(100.0 * (a - b) / abs(b))

    def diff(a: Optional[float], b: Optional[float]) -> Optional[float]:
        return None if a is None or b is None else float(a - b)

    return {
        "budget": float(joint.scenario.total_budget),
        "total_profit_delta_pct": pct(joint.lower_bound, charging.lower_bound),
        "long_run_profit_delta_pct": pct(joint.lower.long_run_profit, charging.lower.long_run_profit),
        "avg_utilization_delta": diff(joint.lower.avg_utilization, charging.lower.avg_utilization),
        "long_run_utilization_delta": diff(joint.lower.long_run_utilization,
                                           charging.lower.long_run_utilization),
    }
