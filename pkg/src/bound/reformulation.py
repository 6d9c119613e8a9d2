"""
松弛重构与部分拉格朗日函数

松弛问题中 k、f̃ 作为决策，链方程只保留前 M−1 行，能量方程放宽为 ≥ 0。
对预算、累计单调性和 h 约束取乘子后，部分拉格朗日函数按（区域, 阶段）可分。
"""
from dataclasses import dataclass
from typing import Any, Dict, Optional

import numpy as np

from src.market.demand import demand
from src.model.decisions import AugmentedDecision
from src.model.scenario import Scenario
from src.queues.charging import erlang_c_terms
from src.queues.swapping import SwapWaitTable


@dataclass
class Multipliers:
    """
    拉格朗日乘子

    mu: (T,) 累计预算约束；eta: (T, M, 2) 累计单调性（最后一维 0=充电站, 1=换电站）；
    theta: (T, M) h 约束，前 M−1 列对应链方程，最后一列对应能量行。
    """
    mu: np.ndarray
    eta: np.ndarray
    theta: np.ndarray
    residual: float = 0.0
    ill_conditioned: bool = False

    @classmethod
    def zeros(cls, T: int, M: int) -> "Multipliers":
        return cls(mu=np.zeros(T), eta=np.zeros((T, M, 2)), theta=np.zeros((T, M)))

    @property
    def T(self) -> int:
        return self.mu.shape[0]

    @property
    def M(self) -> int:
        return self.theta.shape[1]

    def sign_violation(self) -> float:
        """μ、η、θ_M 的最大负值（0 表示满足符号约束）"""
        worst = min(self.mu.min(initial=0.0), self.eta.min(initial=0.0), self.theta[:, -1].min(initial=0.0))
        return float(max(-worst, 0.0))

    def projected(self) -> "Multipliers":
        """投影到符号约束"""
        theta = self.theta.copy()
        theta[:, -1] = np.maximum(theta[:, -1], 0.0)
        return Multipliers(
            mu=np.maximum(self.mu, 0.0),
            eta=np.maximum(self.eta, 0.0),
            theta=theta,
            residual=self.residual,
            ill_conditioned=self.ill_conditioned,
        )

    def eta_next(self, t: int) -> np.ndarray:
        """η_{t+1}（最后一个阶段取 0）"""
        if t + 1 >= self.T:
            return np.zeros_like(self.eta[t])
        return self.eta[t + 1]

    def to_dict(self) -> Dict[str, Any]:
        return {
            "mu": self.mu.tolist(),
            "eta_c": self.eta[..., 0].tolist(),
            "eta_s": self.eta[..., 1].tolist(),
            "theta": self.theta.tolist(),
            "residual": self.residual,
            "ill_conditioned": self.ill_conditioned,
        }


def zone_market(scenario: Scenario, i: int, p, N_ve, N_vg):
    """区域 i 的接驾时间、需求行、收入、运营占用与派单比例（支持广播）"""
    p = np.asarray(p, dtype=float)
    N_ve = np.asarray(N_ve, dtype=float)
    N_vg = np.asarray(N_vg, dtype=float)
    tau = scenario.trip_time[i]
    idle = N_ve + N_vg
    w_p = scenario.phi / np.sqrt(idle)
    lam = demand(
        scenario.base_demand[i], p[..., None], tau, w_p[..., None],
        scenario.alpha, scenario.logit_sensitivity, scenario.outside_price,
    )
    revenue = (p[..., None] * lam * tau).sum(axis=-1)
    operating = (lam * (w_p[..., None] + tau)).sum(axis=-1)
    R = N_ve / idle
    return w_p, lam, revenue, operating, R


def h_residuals(i: int, xt_c_i: float, xt_s_i: float, decision: AugmentedDecision,
                scenario: Scenario) -> np.ndarray:
    """
    区域 i 对 h 约束的贡献（只依赖区域 i 的变量）

    前 M−1 个分量为 k_i·P̃_im（P̃ = P − I），最后一个分量为能量行
    k_i[ℛ − r_i l^c_i − (1−r_i) l^s_i] − N^ve_i − R_i·Σ_j(λ_ij w^p_i + λ_ij τ_ij + f_ij τ_ij)。

    Returns:
        长度为 M 的向量；对所有区域求和得到全局 h
    """
    ops = decision.ops
    M = scenario.M
    tau = scenario.trip_time[i]
    k = float(decision.k[i])
    r = float(ops.r[i])
    w_p, lam, _, operating, R = zone_market(scenario, i, ops.p[i], ops.N_ve[i], ops.N_vg[i])
    f_row = ops.f[i]
    busy = float(operating + (f_row * tau).sum())

    D = R * (lam + f_row) * tau
    D[i] += ops.N_ve[i] + R * w_p * lam.sum()
    P_row = D / D.sum()
    P_tilde = P_row - np.eye(M)[i]

    access = 0.0
    if r > 0:
        access += r * scenario.psi / np.sqrt(xt_c_i)
    if r < 1:
        access += (1.0 - r) * scenario.psi / np.sqrt(xt_s_i)

    out = np.empty(M)
    out[: M - 1] = k * P_tilde[: M - 1]
    out[M - 1] = k * (scenario.battery_range_hours - access) - ops.N_ve[i] - R * busy
    return out


def zone_lagrangian(scenario: Scenario, multipliers: Multipliers, weight: float, t: int, i: int,
                    xt_c, xt_s, p, N_ve, N_vg, f_row, r, k,
                    swap_table: Optional[SwapWaitTable]) -> np.ndarray:
    """
    区域 i、阶段 t 的部分拉格朗日项 L_{i,t}（全部参数可广播）

    f_row 的最后一维为区域。N_ve = 0 表示该阶段没有电动车。
    充电站排队不稳定的点取 −inf。
    """
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        return _zone_lagrangian(scenario, multipliers, weight, t, i, xt_c, xt_s, p, N_ve, N_vg,
                                f_row, r, k, swap_table)


def _zone_lagrangian(scenario, multipliers, weight, t, i, xt_c, xt_s, p, N_ve, N_vg, f_row, r, k, swap_table):
    sc = scenario
    M = sc.M
    xt_c = np.asarray(xt_c, dtype=float)
    xt_s = np.asarray(xt_s, dtype=float)
    r = np.asarray(r, dtype=float)
    k = np.asarray(k, dtype=float)
    N_ve = np.asarray(N_ve, dtype=float)
    f_row = np.asarray(f_row, dtype=float)
    tau = sc.trip_time[i]

    w_p, lam, revenue, operating, R = zone_market(sc, i, p, N_ve, N_vg)
    f_tilde = (f_row * tau).sum(axis=-1)
    busy = operating + f_tilde

    q_c = r * k
    q_s = (1.0 - r) * k
    l_c = np.where(xt_c > 0, sc.psi / np.sqrt(xt_c), np.inf)
    l_s = np.where(xt_s > 0, sc.psi / np.sqrt(xt_s), np.inf)
    lam_c = np.where(q_c > 0, q_c / xt_c, 0.0)
    lam_s = np.where(q_s > 0, q_s / xt_s, 0.0)
    _, _, w_c = erlang_c_terms(np.where(np.isfinite(lam_c), lam_c, np.inf), sc.charge_spec.V, sc.charge_spec.tau_c)
    if swap_table is not None:
        w_s = swap_table.wait(np.where(np.isfinite(lam_s), lam_s, swap_table.upper))
    else:
        w_s = np.zeros_like(lam_s)

    def masked(weight_, value):
        return np.where(weight_ > 0, weight_ * value, 0.0)

    charge_time = masked(q_c, l_c + w_c + sc.charge_spec.tau_c)
    swap_time = masked(q_s, l_s + w_s + sc.swap_spec.tau_s)
    access = masked(q_c, l_c) + masked(q_s, l_s)

    N_e = N_ve + R * busy + charge_time + swap_time
    N_g = np.asarray(N_vg, dtype=float) + (1.0 - R) * busy
    profit_part = weight * (revenue - sc.gamma_g * N_g - sc.gamma_e * N_e)

    eta = multipliers.eta[t, i]
    eta_next = multipliers.eta_next(t)[i]
    mu = multipliers.mu[t]
    facility_part = (eta[0] - eta_next[0] - mu * sc.cost_c) * xt_c + (eta[1] - eta_next[1] - mu * sc.cost_s) * xt_s

    theta = multipliers.theta[t]
    D = R[..., None] * (lam + f_row) * tau
    D[..., i] = D[..., i] + N_ve + R * w_p * lam.sum(axis=-1)
    row_sum = D.sum(axis=-1)
    P_row = np.where(row_sum[..., None] > 0, D / row_sum[..., None], 0.0)
    P_tilde = P_row - np.eye(M)[i]
    chain_part = masked(k, (theta[: M - 1] * P_tilde[..., : M - 1]).sum(axis=-1))
    energy_part = 0.0
    if theta[M - 1] != 0:
        energy_part = theta[M - 1] * (k * sc.battery_range_hours - access - N_ve - R * busy)

    return profit_part + facility_part + chain_part + energy_part


def partial_lagrangian(problem, V: np.ndarray, multipliers: Multipliers) -> float:
    """
    松弛问题任一点处的完整部分拉格朗日函数值

    Args:
        problem: relaxed=True 的 PlanningProblem
        V: 物理变量
        multipliers: 乘子

    Returns:
        F + Σ μ(b̃ − A x̃) + Σ η(x̃_t − x̃_{t−1}) + Σ θ·h
    """
    sc = problem.scenario
    L = problem.layout
    ev = problem.evaluate(V, derivatives=False)
    U = problem.stage_values(V)
    value = ev.objective
    budgets = sc.cumulative_budgets
    previous = np.zeros((2, sc.M))
    for t in range(problem.T):
        xt = np.vstack([U[t, L.xc], U[t, L.xs]])
        if problem.ev_active[t]:
            value += multipliers.mu[t] * (budgets[t] - sc.cost_c * xt[0].sum() - sc.cost_s * xt[1].sum())
        value += float((multipliers.eta[t].T * (xt - previous)).sum())
        previous = xt
        stage = ev.stages[t]
        if problem.ev_active[t]:
            value += float(multipliers.theta[t, : sc.M - 1] @ stage.h_chain[0])
            value += float(multipliers.theta[t, sc.M - 1] * stage.h_energy[0])
    return float(value)


def lagrangian_constant(scenario: Scenario, multipliers: Multipliers) -> float:
    """部分拉格朗日函数的常数项 Σ_t μ_t b̃_t"""
    return float(multipliers.mu @ scenario.cumulative_budgets)
