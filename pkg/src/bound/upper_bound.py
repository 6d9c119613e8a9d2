"""
上界组装

UB = Σ_t μ_t b̃_t + Σ_{t,i} 子问题最优值。子问题彼此独立，可多进程并行；
求和按 (t, i) 固定顺序进行，与求解顺序无关。
"""
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from src.bound.reformulation import Multipliers, lagrangian_constant
from src.bound.subproblem import SubproblemInstance, SubproblemResult, ZonePoint, solve_subproblem
from src.config import settings
from src.config.solver_config import GridOptions, SolverConfig, load_solver_config
from src.model.decisions import CumulativePlan, OperationalDecision
from src.model.scenario import Scenario
from src.optimizer.problem import CHARGING_ONLY, MIXED, SWAPPING_ONLY
from src.queues.swapping import SwapWaitTable
from src.utils import app_logger

# (累计方案, 各阶段运营决策, 各阶段 k)
Anchor = Tuple[CumulativePlan, Sequence[OperationalDecision], Sequence[np.ndarray]]


@dataclass
class UpperBoundResult:
    """上界及逐子问题结果"""
    value: float
    constant: float
    records: List[SubproblemResult]
    sampled: List[Tuple[int, int]] = field(default_factory=list)
    max_shift: float = 0.0
    refined_all: bool = False

    @property
    def margins(self) -> List[float]:
        return [record.margin for record in self.records]

    @property
    def margin(self) -> float:
        """全部子问题网格余量之和（敏感性指标，不计入 value）"""
        return float(sum(self.margins))

    def table(self) -> List[Dict[str, Any]]:
        return [record.to_dict() for record in self.records]

    def to_dict(self) -> Dict[str, Any]:
        return {
            "value": self.value,
            "constant": self.constant,
            "margin": self.margin,
            "refinement": {
                "sampled": [[t + 1, i] for t, i in self.sampled],
                "max_shift": self.max_shift,
                "refined_all": self.refined_all,
            },
            "subproblems": self.table(),
        }


def anchor_points(anchor: Anchor, t: int, i: int) -> ZonePoint:
    plan, operations, ks = anchor
    ops = operations[t]
    k = 0.0 if ks[t] is None else float(ks[t][i])
    return ZonePoint(
        xt_c=float(plan.xt_c[t, i]), xt_s=float(plan.xt_s[t, i]), p=float(ops.p[i]),
        N_ve=float(ops.N_ve[i]), N_vg=float(ops.N_vg[i]), f_row=np.array(ops.f[i], dtype=float),
        r=float(ops.r[i]), k=k,
    )


def build_instances(scenario: Scenario, multipliers: Multipliers, grids: GridOptions,
                    anchors: Sequence[Anchor], config: SolverConfig,
                    policy: Optional[Sequence[str]] = None,
                    swap_table: Optional[SwapWaitTable] = None) -> List[SubproblemInstance]:
    """按 (t, i) 顺序构造全部子问题"""
    if not anchors:
        raise ValueError("至少需要一个锚点解来确定 ȳ 网格")
    policy = tuple(policy) if policy is not None else (MIXED,) * scenario.M
    weights = config.optimizer.discount ** np.arange(scenario.T)
    active = (scenario.cumulative_budgets > 0) & (scenario.cap > 0)
    instances = []
    for t in range(scenario.T):
        for i in range(scenario.M):
            instances.append(SubproblemInstance(
                scenario=scenario, stage=t, zone=i, weight=float(weights[t]),
                multipliers=multipliers,
                anchors=tuple(anchor_points(anchor, t, i) for anchor in anchors),
                grid_options=grids, boxes=config.boxes, eps=config.optimizer.eps_pos,
                ev_active=bool(active[t]),
                allow_c=policy[i] != SWAPPING_ONLY, allow_s=policy[i] != CHARGING_ONLY,
                swap_table=swap_table,
            ))
    return instances


def solve_all(instances: Sequence[SubproblemInstance], workers: int = 1,
              order: Optional[Sequence[int]] = None) -> List[SubproblemResult]:
    """
    求解一批子问题，结果顺序与 instances 一致

    Args:
        instances: 子问题
        workers: 进程数
        order: 求解顺序（instances 下标的排列），缺省为原顺序
    """
    order = list(range(len(instances))) if order is None else list(order)
    if sorted(order) != list(range(len(instances))):
        raise ValueError("order 必须是子问题下标的一个排列")
    queue = [instances[j] for j in order]
    if workers <= 1 or len(queue) <= 1:
        solved = [solve_subproblem(inst) for inst in queue]
    else:
        with ProcessPoolExecutor(max_workers=min(workers, len(queue))) as pool:
            solved = list(pool.map(solve_subproblem, queue))
    results: List[Optional[SubproblemResult]] = [None] * len(instances)
    for j, result in zip(order, solved):
        results[j] = result
    return results


def _assemble(constant: float, records: Sequence[SubproblemResult]) -> float:
    total = constant
    for record in sorted(records, key=lambda rec: (rec.stage, rec.zone)):
        total += record.value
    return float(total)


def upper_bound(scenario: Scenario, multipliers: Multipliers, grids: Optional[GridOptions] = None,
                anchors: Sequence[Anchor] = (), config: Optional[SolverConfig] = None,
                policy: Optional[Sequence[str]] = None, swap_table: Optional[SwapWaitTable] = None,
                workers: Optional[int] = None, order: Optional[Sequence[int]] = None) -> UpperBoundResult:
    """
    由乘子与 ȳ 网格组装上界

    先抽样一部分子问题在加倍分辨率下复核，最大偏移超过 |UB| 的 refine_threshold 时
    对全部子问题加密一次。

    Args:
        scenario: 场景
        multipliers: 乘子（先投影到符号约束）
        grids: 网格参数，缺省取配置中的 grid
        anchors: 锚点解，第一个为网格中心
        config: 求解器配置
        policy: 逐区域策略
        swap_table: 换电等待插值表
        workers: 进程数
        order: 子问题求解顺序（不影响结果）

    Returns:
        UpperBoundResult
    """
    config = config or load_solver_config()
    grids = grids or config.grid
    workers = settings.resolve_workers(workers if workers is not None else config.workers)
    if multipliers.sign_violation() > 0:
        app_logger.warning(f"乘子违反符号约束 {multipliers.sign_violation():.2e}，已投影")
        multipliers = multipliers.projected()

    instances = build_instances(scenario, multipliers, grids, anchors, config, policy, swap_table)
    constant = lagrangian_constant(scenario, multipliers)
    records = solve_all(instances, workers, order)
    value = _assemble(constant, records)

    n = len(instances)
    rng = np.random.default_rng(config.optimizer.seed)
    n_sample = max(1, math.ceil(grids.refine_sample * n))
    sampled = sorted(int(j) for j in rng.choice(n, size=min(n_sample, n), replace=False))
    refined = solve_all([instances[j].doubled() for j in sampled], workers)
    shifts = {j: abs(rec.value - records[j].value) for j, rec in zip(sampled, refined)}
    max_shift = max(shifts.values())
    threshold = grids.refine_threshold * max(abs(value), 1.0)
    refined_all = max_shift > threshold
    app_logger.info(
        f"网格复核: 抽样 {len(sampled)}/{n} 个子问题，最大偏移 {max_shift:.4g}，阈值 {threshold:.4g}"
    )

    if refined_all:
        app_logger.info("偏移超过阈值，对全部子问题加密网格")
        fine = solve_all([inst.doubled() for inst in instances], workers, order)
        shifts = {j: abs(fine[j].value - records[j].value) for j in range(n)}
        records = [fine[j] if fine[j].value >= records[j].value else records[j] for j in range(n)]
        value = _assemble(constant, records)
    else:
        for j, rec in zip(sampled, refined):
            if rec.value > records[j].value:
                records[j] = rec
        value = _assemble(constant, records)

    # 未复核的子问题按抽样中的最大偏移计
    records = [
        replace(record, margin=float(max(shifts.get(j, max_shift), record.margin)))
        for j, record in enumerate(records)
    ]
    result = UpperBoundResult(
        value=value, constant=constant, records=records,
        sampled=[(instances[j].stage, instances[j].zone) for j in sampled],
        max_shift=float(max_shift), refined_all=refined_all,
    )
    app_logger.info(f"上界 {value:.6g}（常数项 {constant:.6g}，网格余量 {result.margin:.4g}，未计入上界）")
    return result
