"""
时间守恒、车队规模、利润与利用率

evaluate_state 按"价格/车队 → 需求 → 移动链 → K、k → 排队 → 车队规模"的顺序单次组合各模块，
对每一步做严格的定义域检查，作为求解结果的权威评估。
"""
from typing import Optional, Tuple

import numpy as np

from src.chargeflow.chain import (
    demand_matrix,
    ev_operating_time,
    feasibility_margin,
    stationary_distribution,
    total_charging_rate,
    transition_matrix,
)
from src.market.demand import pickup_time, realized_demand
from src.model.decisions import MarketState, OperationalDecision
from src.model.exceptions import DomainError
from src.model.scenario import Scenario
from src.queues.charging import access_time, erlang_c_wait
from src.queues.swapping import SwapWaitTable, swap_metrics

# r 与 0/1 的距离小于该值时视为单一补能方式
R_SNAP = 1e-9


def _masked(weight: np.ndarray, value: np.ndarray) -> np.ndarray:
    return weight * np.where(weight > 0, value, 0.0)


def _busy_time(lam: np.ndarray, f: np.ndarray, w_p: np.ndarray, tau: np.ndarray) -> np.ndarray:
    """各区域载客、接驾与调度占用的车辆时间 Σ_j(λ_ij w_p_i + λ_ij τ_ij + f_ij τ_ij)"""
    return (lam * w_p[:, None] + (lam + f) * tau).sum(axis=1)


def charging_downtime(k, r, l_c, w_c, l_s, w_s, tau_c: float, tau_s: float) -> float:
    """补能占用的车辆时间（行驶到设施 + 排队 + 充电/换电）"""
    k = np.asarray(k, dtype=float)
    r = np.asarray(r, dtype=float)
    charge = _masked(r * k, np.asarray(l_c, dtype=float) + np.asarray(w_c, dtype=float) + tau_c)
    swap = _masked((1.0 - r) * k, np.asarray(l_s, dtype=float) + np.asarray(w_s, dtype=float) + tau_s)
    return float((charge + swap).sum())


def fleet_sizes(decision: OperationalDecision, lam, w_p, k, l_c, w_c, l_s, w_s,
                scenario: Scenario) -> Tuple[float, float]:
    """
    由时间守恒得到电动车与燃油车车队规模

    Args:
        decision: 运营决策
        lam: M×M 需求
        w_p: 各区域接驾时间
        k: 各区域充电需求
        l_c, w_c, l_s, w_s: 到设施时间与排队等待（无该类设施的区域可为 nan，只要对应流量为 0）
        scenario: 场景

    Returns:
        (N_e, N_g)
    """
    lam = np.asarray(lam, dtype=float)
    w_p = np.asarray(w_p, dtype=float)
    total_idle = decision.N_ve + decision.N_vg
    R = np.divide(decision.N_ve, total_idle, out=np.zeros_like(total_idle), where=total_idle > 0)
    busy = _busy_time(lam, decision.f, w_p, scenario.trip_time)

    N_g = float(decision.N_vg.sum() + ((1.0 - R) * busy).sum())
    operating = float(decision.N_ve.sum() + (R * busy).sum())
    downtime = charging_downtime(
        k, decision.r, l_c, w_c, l_s, w_s,
        scenario.charge_spec.tau_c, scenario.swap_spec.tau_s,
    )
    return operating + downtime, N_g


def profit(p, lam, tau, N_e: float, N_g: float, scenario: Scenario) -> float:
    """单阶段利润：Σ p_i λ_ij τ_ij − γ_g N_g − γ_e N_e（$/小时）"""
    revenue = float((np.asarray(p, dtype=float)[:, None] * np.asarray(lam, dtype=float) * np.asarray(tau, dtype=float)).sum())
    return revenue - scenario.gamma_g * N_g - scenario.gamma_e * N_e


def ev_utilization(k, r, l_c, w_c, l_s, w_s, N_e: float, scenario: Scenario) -> float:
    """
    电动车利用率：扣除补能占用后的运营时间占比

    Raises:
        DomainError: N_e <= 0
    """
    if not N_e > 0:
        raise DomainError("电动车车队规模必须为正")
    downtime = charging_downtime(
        k, r, l_c, w_c, l_s, w_s,
        scenario.charge_spec.tau_c, scenario.swap_spec.tau_s,
    )
    return float(np.clip(1.0 - downtime / N_e, 0.0, 1.0))


def _snap_split(r: np.ndarray) -> np.ndarray:
    r = np.clip(np.asarray(r, dtype=float), 0.0, 1.0)
    r = np.where(r < R_SNAP, 0.0, r)
    return np.where(r > 1.0 - R_SNAP, 1.0, r)


def gasoline_state(ops: OperationalDecision, scenario: Scenario) -> MarketState:
    """没有电动车时的市场状态（预算为 0 的阶段）"""
    M = scenario.M
    w_p = np.asarray(pickup_time(ops.N_vg, np.zeros(M), scenario.phi), dtype=float)
    lam = realized_demand(scenario, ops.p, w_p)
    busy = _busy_time(lam, ops.f, w_p, scenario.trip_time)
    N_g = float(ops.N_vg.sum() + busy.sum())
    revenue = float((ops.p[:, None] * lam * scenario.trip_time).sum())
    nan = np.full(M, np.nan)
    return MarketState(
        lam=lam, w_p=w_p, R=np.zeros(M), D=np.zeros((M, M)), P=np.eye(M), n=np.full(M, 1.0 / M),
        k=np.zeros(M), K=0.0, l_c=nan, l_s=nan.copy(), w_c=np.zeros(M), w_s=np.zeros(M),
        block_s=np.zeros(M), N_e=0.0, N_g=N_g, revenue=revenue,
        profit=revenue - scenario.gamma_g * N_g, rho_ev=1.0, margin=scenario.battery_range_hours,
        ev_operating_time=0.0, downtime=0.0, ev_active=False,
        notes=["无电动车（阶段预算为 0）"],
    )


def evaluate_state(xt_c, xt_s, ops: OperationalDecision, scenario: Scenario,
                   swap_table: Optional[SwapWaitTable] = None) -> MarketState:
    """
    给定某阶段累计设施与运营决策，计算全部内生量

    Args:
        xt_c: 各区域累计充电站数量
        xt_s: 各区域累计换电站数量
        ops: 运营决策
        scenario: 场景
        swap_table: 换电等待插值表；为 None 时逐区域直接求解嵌入链

    Returns:
        MarketState

    Raises:
        InfeasibleError: 可行裕度不为正
        UnstableQueueError: 充电站利用率 >= 1
        DomainError: 有流量流向数量为 0 的设施
    """
    M = scenario.M
    xt_c = np.asarray(xt_c, dtype=float)
    xt_s = np.asarray(xt_s, dtype=float)
    r = _snap_split(ops.r)

    if np.any((r > 0) & (xt_c <= 0)):
        zones = np.flatnonzero((r > 0) & (xt_c <= 0)).tolist()
        raise DomainError(f"区域 {zones} 没有充电站但分配了充电需求")
    if np.any((r < 1) & (xt_s <= 0)):
        zones = np.flatnonzero((r < 1) & (xt_s <= 0)).tolist()
        raise DomainError(f"区域 {zones} 没有换电站但分配了换电需求")

    w_p = np.asarray(pickup_time(ops.N_ve, ops.N_vg, scenario.phi), dtype=float)
    lam = realized_demand(scenario, ops.p, w_p)
    D, R = demand_matrix(ops.N_ve, ops.N_vg, lam, ops.f, w_p, scenario.trip_time)
    P = transition_matrix(D)
    n = stationary_distribution(P)

    l_c = np.full(M, np.nan)
    l_s = np.full(M, np.nan)
    has_c = xt_c > 0
    has_s = xt_s > 0
    l_c[has_c] = access_time(xt_c[has_c], scenario.psi)
    l_s[has_s] = access_time(xt_s[has_s], scenario.psi)

    operating = float(ev_operating_time(ops.N_ve, R, lam, ops.f, w_p, scenario.trip_time))
    margin = float(feasibility_margin(n, r, l_c, l_s, scenario.battery_range_hours))
    K = total_charging_rate(n, r, l_c, l_s, scenario.battery_range_hours, operating)
    k = n * K

    w_c = np.zeros(M)
    w_s = np.zeros(M)
    block_s = np.zeros(M)
    for i in range(M):
        if r[i] > 0:
            w_c[i] = erlang_c_wait(r[i] * k[i] / xt_c[i], scenario.charge_spec).wait
        if r[i] < 1:
            lam_s = (1.0 - r[i]) * k[i] / xt_s[i]
            if swap_table is not None:
                w_s[i] = float(swap_table.wait(lam_s))
                block_s[i] = float(swap_table.block(lam_s))
            else:
                metrics = swap_metrics(lam_s, scenario.swap_spec, scenario.charge_spec.tau_c)
                w_s[i] = metrics.wait
                block_s[i] = metrics.block

    # 时间守恒：N_e 恰为运营时间与补能占用之和
    downtime = charging_downtime(
        k, r, l_c, w_c, l_s, w_s,
        scenario.charge_spec.tau_c, scenario.swap_spec.tau_s,
    )
    N_e = operating + downtime
    busy = _busy_time(lam, ops.f, w_p, scenario.trip_time)
    N_g = float(ops.N_vg.sum() + ((1.0 - R) * busy).sum())
    revenue = float((ops.p[:, None] * lam * scenario.trip_time).sum())

    notes = []
    if swap_table is not None and np.any((1.0 - r) * k > swap_table.upper * np.where(has_s, xt_s, 0.0)):
        notes.append("部分换电站到达率超出插值表上端，按端点取值")

    return MarketState(
        lam=lam, w_p=w_p, R=R, D=D, P=P, n=n, k=k, K=K,
        l_c=l_c, l_s=l_s, w_c=w_c, w_s=w_s, block_s=block_s,
        N_e=N_e, N_g=N_g, revenue=revenue,
        profit=revenue - scenario.gamma_g * N_g - scenario.gamma_e * N_e,
        rho_ev=ev_utilization(k, r, l_c, w_c, l_s, w_s, N_e, scenario),
        margin=margin, ev_operating_time=operating, downtime=downtime,
        notes=notes,
    )
