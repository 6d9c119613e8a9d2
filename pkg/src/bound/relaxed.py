"""
松弛问题求解与乘子恢复

松弛问题从下界解出发做一次增广拉格朗日局部求解；若结果不优于下界点则保留下界点。
乘子由有效约束上的 KKT 平稳性条件做带符号约束的最小二乘拟合得到。
"""
from dataclasses import dataclass
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
from scipy.optimize import lsq_linear

from src.bound.reformulation import Multipliers
from src.config.solver_config import SolverConfig, load_solver_config
from src.model.decisions import CumulativePlan, OperationalDecision
from src.model.exceptions import ChargenetError
from src.model.scenario import Scenario
from src.optimizer.auglag import augmented_lagrangian
from src.optimizer.problem import PlanningProblem
from src.optimizer.solver import PlanSolution, solve_original
from src.queues.swapping import SwapWaitTable, get_swap_table
from src.utils import app_logger

# 预算松弛量小于该比例时视为有效
BUDGET_SNAP = 1e-4
# 归一化约束值小于该值时视为有效
ACTIVE_TOL = 1e-5
# 归一化变量距边界小于该值时视为贴边
BOX_TOL = 1e-7
# KKT 残差相对 ‖∇F‖ 超过该值时标记为病态
ILL_CONDITIONED = 1e-3


@dataclass
class RelaxedSolution:
    """松弛问题的解"""
    plan: CumulativePlan
    operations: List[OperationalDecision]
    k: List[np.ndarray]
    value: float
    violation: float
    source: str
    V: np.ndarray

    def to_dict(self) -> Dict[str, Any]:
        return {
            "value": self.value,
            "violation": self.violation,
            "source": self.source,
            "plan": self.plan.to_dict(),
            "k": [np.asarray(k).tolist() for k in self.k],
        }


def relaxed_problem(scenario: Scenario, config: SolverConfig, lower: PlanSolution,
                    swap_table: Optional[SwapWaitTable]) -> PlanningProblem:
    """以下界解的充电需求确定 k 的上界，构造松弛问题"""
    anchor_k = max(float(np.max(k)) for k in lower.charging_demand())
    k_max = max(10.0 * anchor_k, 1.0)
    return PlanningProblem(scenario, config, swap_table, relaxed=True,
                           policy=lower.policy, k_max=k_max)


def snap_budgets(problem: PlanningProblem, V: np.ndarray) -> np.ndarray:
    """
    把几乎用满的累计预算推到恰好有效

    松弛量在 b̃_t 的 BUDGET_SNAP 比例以内（含微小超支）时按比例缩放该阶段的累计数量，
    之后按阶段取累计最大值恢复单调性。
    """
    sc = problem.scenario
    L = problem.layout
    V = np.array(V, dtype=float)
    budgets = sc.cumulative_budgets
    for t in range(problem.T):
        if not problem.ev_active[t]:
            continue
        usage = sc.cost_c * V[t, L.xc].sum() + sc.cost_s * V[t, L.xs].sum()
        if usage <= 0:
            continue
        if abs(budgets[t] - usage) <= BUDGET_SNAP * budgets[t]:
            V[t, L.xc] *= budgets[t] / usage
            V[t, L.xs] *= budgets[t] / usage
    cols = L.x_columns
    V[:, cols] = np.minimum(np.maximum.accumulate(V[:, cols], axis=0), sc.cap)
    return V


def recover_multipliers(problem: PlanningProblem, V: np.ndarray) -> Multipliers:
    """
    由 KKT 平稳性恢复乘子

    ∇F + Σ θ∇h + Σ λ∇c + β_lo − β_hi = 0，只保留有效的不等式与贴边的盒约束，
    不等式乘子与盒乘子非负。设施变量的下界由单调性行覆盖，不单独取乘子。

    Args:
        problem: 松弛问题
        V: 松弛问题的（近似）局部最优点

    Returns:
        物理单位下的 Multipliers
    """
    sc = problem.scenario
    L = problem.layout
    M, T = problem.M, problem.T
    ev = problem.evaluate(V, derivatives=True)
    idx = problem.free_index
    grad = ev.grad[idx]

    eq_rows = problem.eq_rows
    in_rows = problem.in_rows
    active = np.flatnonzero(ev.ineq <= ACTIVE_TOL)

    z = problem.to_z(V)
    x_cols = np.zeros(problem.lower.shape, dtype=bool)
    x_cols[:, L.x_columns] = True
    is_x = x_cols.ravel()[idx]
    at_lower = np.flatnonzero((z <= BOX_TOL) & ~is_x)
    at_upper = np.flatnonzero(z >= 1.0 - BOX_TOL)

    n = idx.size
    lower_box = np.zeros((n, at_lower.size))
    lower_box[at_lower, np.arange(at_lower.size)] = 1.0
    upper_box = np.zeros((n, at_upper.size))
    upper_box[at_upper, np.arange(at_upper.size)] = -1.0

    A = np.hstack([ev.jac_eq[:, idx].T, ev.jac_in[active][:, idx].T, lower_box, upper_box])
    n_eq = len(eq_rows)
    lb = np.concatenate([np.full(n_eq, -np.inf), np.zeros(A.shape[1] - n_eq)])
    ub = np.full(A.shape[1], np.inf)

    multipliers = Multipliers.zeros(T, M)
    if A.shape[1] == 0:
        return multipliers

    fit = lsq_linear(A, -grad, bounds=(lb, ub), method="bvls")
    scale_grad = max(float(np.linalg.norm(grad)), 1e-12)
    residual = float(np.linalg.norm(A @ fit.x + grad)) / scale_grad
    multipliers.residual = residual
    multipliers.ill_conditioned = bool(residual > ILL_CONDITIONED or fit.status < 0)

    for value, row in zip(fit.x[:n_eq], eq_rows):
        if row.kind == "chain":
            multipliers.theta[row.stage, row.zone] = value / row.scale
    for value, row_index in zip(fit.x[n_eq:n_eq + active.size], active):
        row = in_rows[row_index]
        if row.kind == "budget":
            multipliers.mu[row.stage] = value / row.scale
        elif row.kind == "monotone":
            multipliers.eta[row.stage, row.zone, 0 if row.facility == "c" else 1] = value / row.scale
        elif row.kind == "energy":
            multipliers.theta[row.stage, M - 1] = value / row.scale

    if multipliers.ill_conditioned:
        app_logger.warning(f"乘子拟合残差较大: 相对残差={residual:.2e}")
    else:
        app_logger.info(f"乘子拟合完成: 相对残差={residual:.2e}, 有效不等式={active.size}")
    app_logger.debug(f"预算乘子 μ = {np.round(multipliers.mu, 6).tolist()}，场景 {sc.name}")
    return multipliers


def solve_relaxed(scenario: Scenario, config: Optional[SolverConfig] = None,
                  lower: Optional[PlanSolution] = None,
                  swap_table: Optional[SwapWaitTable] = None,
                  workers: Optional[int] = None) -> Tuple[RelaxedSolution, Multipliers]:
    """
    求解松弛问题并恢复乘子

    Args:
        scenario: 场景
        config: 求解器配置
        lower: 下界解，缺省时先求解原问题
        swap_table: 换电等待插值表
        workers: 仅在需要先求下界时使用

    Returns:
        (松弛解, 乘子)；松弛解的目标值不低于下界
    """
    config = config or load_solver_config()
    opts = config.optimizer
    if lower is None:
        lower = solve_original(scenario, config, swap_table=swap_table, workers=workers)
    if swap_table is None and any(item != "charging_only" for item in lower.policy):
        swap_table = get_swap_table(scenario.swap_spec, scenario.charge_spec.tau_c, opts.swap_load_factor)

    problem = relaxed_problem(scenario, config, lower, swap_table)
    V0 = problem.from_solution(lower.plan, lower.operations, lower.charging_demand())
    anchor_value = problem.evaluate(V0, derivatives=False).objective
    feasible_tol = 10.0 * opts.kkt_tol

    V_best, source = V0, "lower-bound"
    try:
        with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
            result = augmented_lagrangian(problem.nlp, problem.to_z(V0), opts, "relaxed")
        V1 = snap_budgets(problem, problem.from_z(result.z))
        violation = problem.violation(V1)
        value = problem.evaluate(V1, derivatives=False).objective
        if violation <= feasible_tol and value >= anchor_value:
            V_best, source = V1, "relaxed"
        else:
            app_logger.info(
                f"松弛解未采用: 目标={value:.6g}, 违背={violation:.2e}, 下界点目标={anchor_value:.6g}"
            )
    except (ChargenetError, np.linalg.LinAlgError, ValueError) as e:
        app_logger.warning(f"松弛问题求解失败，沿用下界点: {str(e)}")

    value = problem.evaluate(V_best, derivatives=False).objective
    plan, operations, ks = problem.to_solution(V_best)
    solution = RelaxedSolution(
        plan=plan, operations=operations, k=[np.asarray(k) for k in ks], value=float(value),
        violation=problem.violation(V_best), source=source, V=V_best,
    )
    app_logger.info(f"松弛问题目标 {solution.value:.6g}（来源: {source}），下界 {lower.lower_bound:.6g}")

    multipliers = recover_multipliers(problem, snap_budgets(problem, V_best))
    return solution, multipliers
