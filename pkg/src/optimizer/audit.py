"""
可行性审计

不依赖求解器状态，从头重新检查一个多阶段方案是否满足原问题的全部约束。
"""
from dataclasses import asdict, dataclass, field
from typing import Any, Dict, List, Optional, Sequence

import numpy as np

from src.economics.state import evaluate_state
from src.market.demand import flow_residual, pickup_time, realized_demand
from src.model.decisions import CumulativePlan, OperationalDecision
from src.model.exceptions import ChargenetError
from src.model.scenario import Scenario
from src.optimizer.problem import CHARGING_ONLY, MIXED, SWAPPING_ONLY
from src.queues.swapping import SwapWaitTable

FLOW_TOL = 1e-6
BUDGET_TOL = 1e-9


@dataclass
class AuditCheck:
    """单项检查"""
    name: str
    stage: Optional[int]
    value: float
    limit: float
    passed: bool
    detail: str = ""


@dataclass
class AuditReport:
    """审计结果"""
    checks: List[AuditCheck] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(check.passed for check in self.checks)

    @property
    def failures(self) -> List[AuditCheck]:
        return [check for check in self.checks if not check.passed]

    def add(self, name: str, stage: Optional[int], value: float, limit: float,
            passed: bool, detail: str = "") -> None:
        self.checks.append(AuditCheck(name, stage, float(value), float(limit), bool(passed), detail))

    def to_dict(self) -> Dict[str, Any]:
        return {
            "passed": self.passed,
            "n_checks": len(self.checks),
            "failures": [asdict(check) for check in self.failures],
        }


def audit_solution(scenario: Scenario, plan: CumulativePlan, operations: Sequence[OperationalDecision],
                   policy: Optional[Sequence[str]] = None,
                   swap_table: Optional[SwapWaitTable] = None) -> AuditReport:
    """
    检查预算、累计单调性、上限、正性、流量平衡、可行裕度与排队稳定性

    Args:
        scenario: 场景
        plan: 累计方案
        operations: 各阶段运营决策
        policy: 逐区域策略限制
        swap_table: 换电等待插值表；为 None 时直接求解嵌入链（最终报告）

    Returns:
        AuditReport
    """
    report = AuditReport()
    M, T = scenario.M, scenario.T
    policy = tuple(policy) if policy is not None else (MIXED,) * M

    increments = plan.increments()
    smallest = float(min(increments.x_c.min(), increments.x_s.min()))
    report.add("monotone", None, smallest, 0.0, smallest >= -1e-12)

    for t in range(T):
        spent = scenario.cost_c * increments.x_c[t].sum() + scenario.cost_s * increments.x_s[t].sum()
        limit = float(scenario.budgets[t])
        report.add("budget", t, spent, limit, spent <= limit * (1.0 + BUDGET_TOL) + 1e-12)

    largest = float(max(plan.xt_c[-1].max(), plan.xt_s[-1].max()))
    report.add("cap", None, largest, scenario.cap, largest <= scenario.cap * (1.0 + 1e-12) + 1e-12)

    for i, item in enumerate(policy):
        if item == CHARGING_ONLY:
            ok = np.all(plan.xt_s[:, i] == 0) and all(ops.r[i] == 1.0 for ops in operations)
            report.add("policy", None, i, 0, ok, f"区域 {i} 仅充电站")
        elif item == SWAPPING_ONLY:
            ok = np.all(plan.xt_c[:, i] == 0) and all(ops.r[i] == 0.0 for ops in operations)
            report.add("policy", None, i, 0, ok, f"区域 {i} 仅换电站")

    for t, ops in enumerate(operations):
        ev_active = bool(np.any(ops.N_ve > 0))
        report.add("price", t, ops.p.min(), 0.0, ops.p.min() >= 0)
        report.add("idle_gasoline", t, ops.N_vg.min(), 0.0, ops.N_vg.min() >= 0)
        report.add("rebalancing", t, ops.f.min(), 0.0, ops.f.min() >= 0)
        report.add("split", t, ops.r.min(), 0.0, ops.r.min() >= 0 and ops.r.max() <= 1)

        if ev_active:
            report.add("idle_ev", t, ops.N_ve.min(), 0.0, ops.N_ve.min() > 0)
        try:
            w_p = pickup_time(ops.N_ve, ops.N_vg, scenario.phi)
        except ChargenetError as e:
            report.add("pickup_time", t, np.nan, 0.0, False, str(e))
            continue

        lam = realized_demand(scenario, ops.p, w_p)
        residual = float(np.max(np.abs(flow_residual(lam, ops.f))))
        total_flow = float((lam + ops.f).sum())
        report.add("flow_balance", t, residual, FLOW_TOL * total_flow, residual <= FLOW_TOL * total_flow)

        if not ev_active:
            continue
        try:
            state = evaluate_state(plan.xt_c[t], plan.xt_s[t], ops, scenario, swap_table=swap_table)
        except ChargenetError as e:
            report.add("market_state", t, np.nan, 0.0, False, str(e))
            continue
        report.add("feasibility_margin", t, state.margin, 0.0, state.margin > 0)
        with np.errstate(divide="ignore", invalid="ignore"):
            rho = np.where(plan.xt_c[t] > 0, ops.r * state.k * scenario.charge_spec.tau_c
                           / (scenario.charge_spec.V * plan.xt_c[t]), 0.0)
        report.add("charging_stability", t, float(rho.max()), 1.0, float(rho.max()) < 1.0)

    return report
