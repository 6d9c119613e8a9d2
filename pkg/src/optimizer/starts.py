"""
多起点初值
"""
from typing import List, Optional

import numpy as np
from scipy.stats import qmc

from src.chargeflow.chain import demand_matrix, ev_operating_time, solve_stationary
from src.market.demand import flow_residual, realized_demand
from src.model.decisions import CumulativePlan, OperationalDecision
from src.optimizer.problem import CHARGING_ONLY, SWAPPING_ONLY, PlanningProblem

# 启发式初值中换电站的目标利用率
SWAP_TARGET_LOAD = 0.7
# 随机起点相对启发式初值的扰动幅度（归一化坐标）
LHS_SPREAD = 0.25


def balancing_flows(lam: np.ndarray, f: Optional[np.ndarray] = None) -> np.ndarray:
    """
    补足流量平衡所需的空车调度

    入多于出的区域按比例把差额调往出多于入的区域，结果的对角线为 0。

    Args:
        lam: M×M 需求
        f: 已有的调度流量

    Returns:
        需要叠加的调度流量
    """
    f = np.zeros_like(lam) if f is None else f
    residual = flow_residual(lam, f)
    surplus = np.maximum(-residual, 0.0)
    deficit = np.maximum(residual, 0.0)
    total = deficit.sum()
    if total <= 0:
        return np.zeros_like(lam)
    return np.outer(surplus, deficit) / total


def heuristic_start(problem: PlanningProblem) -> np.ndarray:
    """
    按需求规模构造的启发式初值

    价格取外部选择价格，空闲车辆取行程占用的 10%，调度补足流量平衡；
    累计预算按估计的充电需求在区域间分配，混合策略的区域充电/换电各占一半。
    """
    sc = problem.scenario
    M, T = sc.M, sc.T
    boxes = problem.config.boxes
    idle = np.clip(0.1 * (sc.base_demand * sc.trip_time).sum(axis=1), 1.0, 0.5 * boxes.idle_max)
    p = np.full(M, sc.outside_price)

    swap_share = np.array([
        0.0 if item == CHARGING_ONLY else 1.0 if item == SWAPPING_ONLY else 0.5
        for item in problem.policy
    ])
    xt_c = np.zeros((T, M))
    xt_s = np.zeros((T, M))
    operations: List[OperationalDecision] = []
    ks = []

    for t in range(T):
        active = bool(problem.ev_active[t])
        N_ve = idle.copy() if active else np.zeros(M)
        N_vg = 0.05 * idle if active else idle.copy()
        w_p = sc.phi / np.sqrt(N_ve + N_vg)
        lam = realized_demand(sc, p, w_p)
        f = balancing_flows(lam)
        r = np.ones(M)
        k = np.zeros(M)

        if active:
            D, R = demand_matrix(N_ve, N_vg, lam, f, w_p, sc.trip_time)
            n = solve_stationary(D / D.sum(axis=1, keepdims=True))
            operating = float(ev_operating_time(N_ve, R, lam, f, w_p, sc.trip_time))
            k = n * operating / (0.95 * sc.battery_range_hours)
            spend = sc.cumulative_budgets[t] * k / k.sum()
            xt_c[t] = np.minimum((1.0 - swap_share) * spend / sc.cost_c, sc.cap)
            xt_s[t] = np.minimum(swap_share * spend / sc.cost_s, sc.cap)
            swap_capacity = SWAP_TARGET_LOAD * sc.swap_spec.service_rate * xt_s[t]
            r = 1.0 - np.minimum(1.0, swap_capacity / np.maximum(k, 1e-12))
            r = np.where(swap_share >= 1.0, 0.0, np.where(swap_share <= 0.0, 1.0, r))

        operations.append(OperationalDecision.from_arrays(M, p, N_ve, N_vg, f, r))
        ks.append(k)

    plan = CumulativePlan(
        xt_c=np.maximum.accumulate(xt_c, axis=0),
        xt_s=np.maximum.accumulate(xt_s, axis=0),
    )
    return problem.from_solution(plan, operations, ks if problem.relaxed else None)


def lhs_starts(problem: PlanningProblem, anchor: np.ndarray, count: int, seed: int) -> List[np.ndarray]:
    """
    以启发式初值为中心的拉丁超立方扰动起点

    Args:
        problem: 规划问题
        anchor: 中心点（物理变量）
        count: 起点数量
        seed: 随机种子

    Returns:
        物理变量起点列表
    """
    if count <= 0 or problem.n_free == 0:
        return []
    sampler = qmc.LatinHypercube(d=problem.n_free, seed=seed)
    samples = sampler.random(count)
    center = problem.to_z(anchor)
    starts = []
    for sample in samples:
        z = np.clip(center + LHS_SPREAD * (2.0 * sample - 1.0), 0.0, 1.0)
        starts.append(problem.from_z(z))
    return starts
