"""
原问题求解（下界）

多起点增广拉格朗日局部求解，候选解经修复、逐阶段 evaluate_state 评估与独立审计后，
取利润最大者（平局取累计方案字典序最小者）。
"""
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from src.config import settings
from src.config.solver_config import SolverConfig, load_solver_config
from src.economics.state import evaluate_state, gasoline_state
from src.market.demand import realized_demand
from src.model.decisions import CumulativePlan, MarketState, OperationalDecision
from src.model.exceptions import ChargenetError, InfeasibleError
from src.model.scenario import Scenario
from src.optimizer.audit import AuditReport, audit_solution
from src.optimizer.auglag import augmented_lagrangian
from src.optimizer.problem import CHARGING_ONLY, PlanningProblem, resolve_policy
from src.optimizer.rounding import rounding_report
from src.optimizer.starts import balancing_flows, heuristic_start, lhs_starts
from src.queues.swapping import SwapWaitTable, get_swap_table
from src.utils import app_logger

# 利润相对差小于该值视为平局
TIE_TOL = 1e-12
# 直接求解换电等待时间复核的候选个数
FINAL_CHECKS = 3
# r 与 0/1 的距离小于该值时取整
SPLIT_SNAP = 1e-9


@dataclass
class StartOutcome:
    """单个起点的求解结果"""
    label: str
    V: Optional[np.ndarray]
    summary: Dict[str, Any] = field(default_factory=dict)
    error: str = ""


@dataclass
class PlanSolution:
    """经审计的多阶段方案及其逐阶段市场状态"""
    scenario: Scenario
    mode: str
    policy: Tuple[str, ...]
    plan: CumulativePlan
    operations: List[OperationalDecision]
    states: List[MarketState]
    weights: np.ndarray
    lower_bound: float
    audit: AuditReport
    source: str = ""
    starts: List[Dict[str, Any]] = field(default_factory=list)

    @property
    def stage_profits(self) -> np.ndarray:
        return np.array([state.profit for state in self.states])

    @property
    def long_run_profit(self) -> float:
        """最后一个阶段的利润"""
        return float(self.states[-1].profit)

    @property
    def avg_utilization(self) -> Optional[float]:
        """按电动车车队规模加权的平均利用率"""
        fleet = np.array([state.N_e for state in self.states])
        if fleet.sum() <= 0:
            return None
        rho = np.array([state.rho_ev for state in self.states])
        return float((fleet * rho).sum() / fleet.sum())

    @property
    def long_run_utilization(self) -> Optional[float]:
        last = self.states[-1]
        return float(last.rho_ev) if last.N_e > 0 else None

    def charging_demand(self) -> List[np.ndarray]:
        return [state.k for state in self.states]

    def deployment_rows(self) -> List[Dict[str, Any]]:
        """逐阶段逐区域的新建与累计设施数量"""
        increments = self.plan.increments()
        rows = []
        for t in range(self.plan.T):
            for i in range(self.scenario.M):
                rows.append({
                    "zone": i,
                    "stage": t + 1,
                    "dx_c": float(increments.x_c[t, i]),
                    "dx_s": float(increments.x_s[t, i]),
                    "xt_c": float(self.plan.xt_c[t, i]),
                    "xt_s": float(self.plan.xt_s[t, i]),
                })
        return rows

    def trace_rows(self) -> List[Dict[str, Any]]:
        """逐阶段利润、车队规模、利用率与等待时间轨迹"""
        rows = []
        for t, state in enumerate(self.states):
            charge_zones = self.operations[t].r > 0
            swap_zones = self.operations[t].r < 1
            rows.append({
                "mode": self.mode,
                "stage": t + 1,
                "profit": float(state.profit),
                "revenue": float(state.revenue),
                "N_e": float(state.N_e),
                "N_g": float(state.N_g),
                "K": float(state.K),
                "rho_ev": float(state.rho_ev),
                "mean_w_p": float(np.mean(state.w_p)),
                "mean_w_c": float(np.mean(state.w_c[charge_zones])) if state.ev_active and charge_zones.any() else 0.0,
                "mean_w_s": float(np.mean(state.w_s[swap_zones])) if state.ev_active and swap_zones.any() else 0.0,
                "max_block_s": float(np.max(state.block_s)),
            })
        return rows

    def to_dict(self) -> Dict[str, Any]:
        return {
            "scenario": self.scenario.name,
            "scenario_hash": self.scenario.fingerprint(),
            "mode": self.mode,
            "policy": list(self.policy),
            "lower_bound": self.lower_bound,
            "stage_profits": self.stage_profits.tolist(),
            "stage_weights": self.weights.tolist(),
            "long_run_profit": self.long_run_profit,
            "avg_utilization": self.avg_utilization,
            "long_run_utilization": self.long_run_utilization,
            "source": self.source,
            "plan": self.plan.to_dict(),
            "increments": self.plan.increments().to_dict(),
            "operations": [ops.to_dict() for ops in self.operations],
            "states": [state.to_dict() for state in self.states],
            "audit": self.audit.to_dict(),
            "rounding": rounding_report(self.plan, self.scenario),
            "starts": self.starts,
        }


def _optimize_start(task: tuple) -> StartOutcome:
    scenario, config, swap_table, policy, label, V0 = task
    problem = PlanningProblem(scenario, config, swap_table, relaxed=False, policy=policy)
    try:
        with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
            result = augmented_lagrangian(problem.nlp, problem.to_z(V0), config.optimizer, label)
    except (ChargenetError, np.linalg.LinAlgError, ValueError) as e:
        app_logger.warning(f"起点 {label} 求解失败: {str(e)}")
        return StartOutcome(label=label, V=None, error=str(e))
    profit = -result.values.f * problem.obj_scale
    app_logger.info(
        f"起点 {label}: 目标={profit:.6g}, 违背={result.violation:.2e}, 外层迭代={result.outer_iterations}"
    )
    return StartOutcome(label=label, V=problem.from_z(result.z), summary=result.summary())


def run_starts(problem: PlanningProblem, starts: Sequence[Tuple[str, np.ndarray]],
               workers: Optional[int] = None) -> List[StartOutcome]:
    """
    运行全部起点；多进程时结果顺序与起点顺序一致

    Args:
        problem: 规划问题（提供场景、配置、插值表与策略）
        starts: (标识, 物理变量初值) 列表
        workers: 进程数，缺省读取配置与环境变量

    Returns:
        StartOutcome 列表
    """
    workers = settings.resolve_workers(workers if workers is not None else problem.config.workers)
    tasks = [
        (problem.scenario, problem.config, problem.swap_table, problem.policy, label, V0)
        for label, V0 in starts
    ]
    if workers <= 1 or len(tasks) <= 1:
        return [_optimize_start(task) for task in tasks]
    with ProcessPoolExecutor(max_workers=min(workers, len(tasks))) as pool:
        return list(pool.map(_optimize_start, tasks))


def repair(problem: PlanningProblem, V: np.ndarray) -> np.ndarray:
    """
    消除求解器容差内的微小违背

    超出阶段预算或上限的新建数量按比例压缩，流量平衡由叠加调度补足。
    没有某类设施的区域，其分配比例推到另一类设施。
    """
    sc = problem.scenario
    L = problem.layout
    V = problem.clip(V)
    rows, cols = L.off_diagonal()

    for t in range(problem.T):
        spent = sc.cost_c * V[t, L.xc].sum() + sc.cost_s * V[t, L.xs].sum()
        if spent > sc.budgets[t] and spent > 0:
            V[t, L.xc] *= sc.budgets[t] / spent
            V[t, L.xs] *= sc.budgets[t] / spent

    if sc.cap > 0:
        for block in (L.xc, L.xs):
            totals = V[:, block].sum(axis=0)
            scale = np.where(totals > sc.cap, sc.cap / np.maximum(totals, 1e-300), 1.0)
            V[:, block] *= scale

    U = problem.stage_values(V)
    for t in range(problem.T):
        if problem.ev_active[t]:
            r = V[t, L.r]
            r = np.where(r < SPLIT_SNAP, 0.0, np.where(r > 1.0 - SPLIT_SNAP, 1.0, r))
            r = np.where(U[t, L.xc] <= 0, 0.0, r)
            r = np.where(U[t, L.xs] <= 0, 1.0, r)
            V[t, L.r] = r
            idle = V[t, L.n_ve] + V[t, L.n_vg]
        else:
            idle = V[t, L.n_vg]
        w_p = sc.phi / np.sqrt(idle)
        lam = realized_demand(sc, V[t, L.p], w_p)
        f = L.unpack(V[t][None, :])["f"][0]
        f = f + balancing_flows(lam, f)
        V[t, L.f] = f[rows, cols]
    return V


def _assess(problem: PlanningProblem, label: str, V: np.ndarray, table: Optional[SwapWaitTable]):
    """修复、评估并审计一个候选；table 为 None 时逐区域直接求解换电嵌入链"""
    sc = problem.scenario
    try:
        V = repair(problem, V)
        plan, operations, _ = problem.to_solution(V)
        states = [
            evaluate_state(plan.xt_c[t], plan.xt_s[t], ops, sc, swap_table=table)
            if problem.ev_active[t] else gasoline_state(ops, sc)
            for t, ops in enumerate(operations)
        ]
    except ChargenetError as e:
        app_logger.debug(f"候选 {label} 评估失败: {str(e)}")
        return None

    audit = audit_solution(sc, plan, operations, policy=problem.policy, swap_table=table)
    if not audit.passed:
        names = sorted({check.name for check in audit.failures})
        app_logger.debug(f"候选 {label} 未通过审计: {names}")
        return None
    lower_bound = float(sum(w * state.profit for w, state in zip(problem.weights, states)))
    return plan, operations, states, audit, lower_bound


def _better(assessed, best) -> bool:
    """下界更高者胜；相差在 TIE_TOL 内时取字典序较小的方案"""
    if best is None:
        return True
    gap = assessed[4] - best[4]
    tol = TIE_TOL * max(1.0, abs(best[4]))
    return gap > tol or (abs(gap) <= tol and assessed[0].lexicographic_key() < best[0].lexicographic_key())


def _select(problem: PlanningProblem, candidates: Sequence[Tuple[str, np.ndarray]]):
    """
    在候选中选出最终解

    先用插值表评估全部候选并按下界排序，再对排名靠前的 FINAL_CHECKS 个可行候选
    以及全部热启动候选直接求解换电等待时间，重新评估与审计；最终下界与报告均取直接求解的结果。

    Returns:
        (最优评估结果, 来源标识)；没有可行候选时为 (None, "")
    """
    table = problem.swap_table
    ranked = []
    for order, (label, V) in enumerate(candidates):
        assessed = _assess(problem, label, V, table)
        if assessed is not None:
            ranked.append((-assessed[4], order, label, V))
    ranked.sort(key=lambda item: item[:2])

    best, best_label, checked = None, "", 0
    for _, _, label, V in ranked:
        warm = label.startswith("warm-")
        if checked >= FINAL_CHECKS and not warm:
            continue
        assessed = _assess(problem, label, V, None)
        if assessed is None:
            app_logger.debug(f"候选 {label} 直接求解换电等待后未通过审计")
            continue
        checked += 1
        if _better(assessed, best):
            best, best_label = assessed, label
    return best, best_label


def _needs_swap_table(scenario: Scenario, policy: Sequence[str]) -> bool:
    active = (scenario.cumulative_budgets > 0) & (scenario.cap > 0)
    return bool(active.any()) and any(item != CHARGING_ONLY for item in policy)


def solve_original(scenario: Scenario, config: Optional[SolverConfig] = None, mode: str = "joint",
                   policy: Optional[Sequence[str]] = None, warm_starts: Sequence[PlanSolution] = (),
                   swap_table: Optional[SwapWaitTable] = None, workers: Optional[int] = None) -> PlanSolution:
    """
    求原问题的可行局部解，其总利润即下界

    Args:
        scenario: 场景
        config: 求解器配置，缺省时从 CHARGENET_SOLVER_CONFIG 加载
        mode: joint（充换电联合）或 charging_only（仅充电站）
        policy: 逐区域策略限制，给出时覆盖 mode
        warm_starts: 已有的解，既作为起点也直接作为候选（保证下界不劣于它们）
        swap_table: 换电等待插值表，缺省时按场景构造或读取缓存
        workers: 并行进程数

    Returns:
        PlanSolution

    Raises:
        InfeasibleError: 强制部署电动车但存在零预算阶段，或所有起点都没有可行解
    """
    config = config or load_solver_config()
    opts = config.optimizer
    label_mode = mode if policy is None else "policy"
    policy = resolve_policy(mode, policy, scenario.M)
    active = (scenario.cumulative_budgets > 0) & (scenario.cap > 0)
    if not active.all() and opts.ev_mandatory:
        app_logger.error(f"场景 {scenario.name} 存在预算为 0 的阶段，无法部署电动车")
        raise InfeasibleError("存在累计预算为 0 的阶段，无法部署电动车", constraint="budget")
    if not active.any():
        app_logger.info(f"场景 {scenario.name} 预算为 0，按纯燃油车队求解")

    if swap_table is None and _needs_swap_table(scenario, policy):
        swap_table = get_swap_table(scenario.swap_spec, scenario.charge_spec.tau_c, opts.swap_load_factor)

    problem = PlanningProblem(scenario, config, swap_table, relaxed=False, policy=policy)
    anchor = heuristic_start(problem)
    starts = [("heuristic", anchor)]
    starts += [
        (f"lhs-{idx}", V)
        for idx, V in enumerate(lhs_starts(problem, anchor, opts.multistart - 1, opts.seed), start=1)
    ]
    warm = []
    for idx, solution in enumerate(warm_starts):
        warm.append((f"warm-{idx}", problem.from_solution(solution.plan, solution.operations)))

    app_logger.info(
        f"求解原问题: 场景={scenario.name}, 模式={mode}, 总预算={scenario.total_budget:g}, "
        f"起点数={len(starts) + len(warm)}, 变量数={problem.n_free}"
    )
    outcomes = run_starts(problem, starts + warm, workers)

    candidates = [(outcome.label, outcome.V) for outcome in outcomes if outcome.V is not None]
    candidates += [(f"{label}-as-is", V) for label, V in [starts[0]] + warm]

    best, best_label = _select(problem, candidates)
    if best is None:
        app_logger.error(f"场景 {scenario.name} 所有起点均未找到可行解")
        raise InfeasibleError("所有起点均未找到可行解", constraint="multistart")

    plan, operations, states, audit, lower_bound = best
    app_logger.info(f"下界 {lower_bound:.6g}（来源: {best_label}）")
    return PlanSolution(
        scenario=scenario,
        mode=label_mode,
        policy=tuple(policy),
        plan=plan,
        operations=operations,
        states=states,
        weights=problem.weights,
        lower_bound=lower_bound,
        audit=audit,
        source=best_label,
        starts=[{"label": o.label, "error": o.error, **o.summary} for o in outcomes],
    )


def solve_charging_only(scenario: Scenario, config: Optional[SolverConfig] = None, **kwargs) -> PlanSolution:
    """仅部署充电站（x̃^s = 0, r = 1）"""
    return solve_original(scenario, config, mode="charging_only", **kwargs)


def solve_gasoline_only(scenario: Scenario, config: Optional[SolverConfig] = None,
                        workers: Optional[int] = None) -> PlanSolution:
    """
    不含电动车的简化模型：只优化价格、燃油车空闲数量与调度

    各阶段市场相同，单独求解一个阶段后复制到全部阶段。

    Returns:
        设施方案全为 0 的 PlanSolution
    """
    config = config or load_solver_config()
    config = config.model_copy(update={
        "optimizer": config.optimizer.model_copy(update={"ev_mandatory": False}),
    })
    single = replace(scenario, T=1, budgets=np.zeros(1), name=f"{scenario.name}-gasoline")
    stage = solve_original(single, config, mode="charging_only", workers=workers)

    weights = config.optimizer.discount ** np.arange(scenario.T)
    ops = stage.operations[0]
    state = stage.states[0]
    return PlanSolution(
        scenario=scenario,
        mode="gasoline_only",
        policy=stage.policy,
        plan=CumulativePlan.zeros(scenario.T, scenario.M),
        operations=[ops] * scenario.T,
        states=[state] * scenario.T,
        weights=weights,
        lower_bound=float(state.profit * weights.sum()),
        audit=stage.audit,
        source="gasoline-only",
        starts=stage.starts,
    )
