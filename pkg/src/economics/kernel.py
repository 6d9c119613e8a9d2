"""
单阶段批量评估内核

对一批候选决策（前置批维度 B）一次性计算市场均衡、排队等待、车队规模、利润与约束值。
供优化器的有限差分和松弛问题使用；逐项严格检查的版本见 state.evaluate_state。
"""
from dataclasses import dataclass
from typing import Optional

import numpy as np

from src.chargeflow.chain import demand_matrix, ev_operating_time, solve_stationary
from src.config.solver_config import OptimizerOptions
from src.market.demand import flow_residual, realized_demand
from src.model.scenario import Scenario
from src.queues.charging import erlang_c_terms
from src.queues.swapping import SwapWaitTable

# 设施数量的数值下限（仅用于避免除零；x=0 且有流量的情形由约束排除）
X_FLOOR = 1e-9


@dataclass
class KernelResult:
    """批量评估结果，除特别说明外首维为批维度"""
    w_p: np.ndarray
    lam: np.ndarray
    R: np.ndarray
    P: np.ndarray
    n: np.ndarray
    busy: np.ndarray
    op_time: np.ndarray
    margin: np.ndarray
    K: np.ndarray
    k: np.ndarray
    l_c: np.ndarray
    l_s: np.ndarray
    w_c: np.ndarray
    w_s: np.ndarray
    block_s: np.ndarray
    rho_c: np.ndarray
    downtime: np.ndarray
    N_e: np.ndarray
    N_g: np.ndarray
    revenue: np.ndarray
    profit: np.ndarray
    rho_ev: np.ndarray
    flow_res: np.ndarray
    stab_slack: np.ndarray
    swap_slack: np.ndarray
    h_chain: np.ndarray
    h_energy: np.ndarray


class StageKernel:
    """单阶段的向量化评估器"""

    def __init__(self, scenario: Scenario, options: OptimizerOptions,
                 swap_table: Optional[SwapWaitTable], ev_active: bool = True):
        self.scenario = scenario
        self.options = options
        self.swap_table = swap_table
        self.ev_active = ev_active
        self.swap_cap = options.swap_load_factor * scenario.swap_spec.service_rate

    def evaluate(self, xc, xs, p, N_ve, N_vg, f, r, k=None) -> KernelResult:
        """
        评估一批决策

        Args:
            xc, xs: (B, M) 累计充电站/换电站数量
            p, N_ve, N_vg, r: (B, M)
            f: (B, M, M) 调度流量
            k: (B, M) 充电需求；为 None 时由能量平衡内生求出，否则视为决策（松弛问题）

        Returns:
            KernelResult
        """
        sc = self.scenario
        opts = self.options
        tau = sc.trip_time
        p = np.asarray(p, dtype=float)
        batch, M = p.shape
        N_vg = np.asarray(N_vg, dtype=float)
        f = np.asarray(f, dtype=float)

        if not self.ev_active:
            return self._gasoline_only(p, N_vg, f)

        N_ve = np.maximum(np.asarray(N_ve, dtype=float), opts.eps_pos)
        r = np.clip(np.asarray(r, dtype=float), 0.0, 1.0)
        xc = np.maximum(np.asarray(xc, dtype=float), X_FLOOR)
        xs = np.maximum(np.asarray(xs, dtype=float), X_FLOOR)

        w_p = sc.phi / np.sqrt(N_ve + N_vg)
        lam = realized_demand(sc, p, w_p)
        D, R = demand_matrix(N_ve, N_vg, lam, f, w_p, tau)
        P = D / D.sum(axis=-1, keepdims=True)
        n = solve_stationary(P)

        busy = (lam * w_p[:, :, None] + (lam + f) * tau).sum(axis=-1)
        op_time = ev_operating_time(N_ve, R, lam, f, w_p, tau)

        l_c = sc.psi / np.sqrt(xc)
        l_s = sc.psi / np.sqrt(xs)
        access = r * l_c + (1.0 - r) * l_s
        margin = sc.battery_range_hours - (n * access).sum(axis=-1)

        if k is None:
            K = op_time / np.maximum(margin, opts.eps_pos)
            k = n * K[:, None]
        else:
            k = np.maximum(np.asarray(k, dtype=float), opts.eps_pos)
            K = k.sum(axis=-1)

        q_c = r * k
        q_s = (1.0 - r) * k
        spec_c = sc.charge_spec
        rho_c = q_c / xc * spec_c.tau_c / spec_c.V
        lam_c = np.minimum(rho_c, opts.rho_max) * spec_c.V / spec_c.tau_c
        _, _, w_c = erlang_c_terms(lam_c, spec_c.V, spec_c.tau_c)

        lam_s = q_s / xs
        if self.swap_table is not None:
            w_s = self.swap_table.wait(lam_s)
            block_s = self.swap_table.block(lam_s)
        else:
            w_s = np.zeros_like(lam_s)
            block_s = np.zeros_like(lam_s)

        downtime = (q_c * (l_c + w_c + spec_c.tau_c) + q_s * (l_s + w_s + sc.swap_spec.tau_s)).sum(axis=-1)
        N_e = op_time + downtime
        N_g = N_vg.sum(axis=-1) + ((1.0 - R) * busy).sum(axis=-1)
        revenue = (p[:, :, None] * lam * tau).sum(axis=(-1, -2))
        profit = revenue - sc.gamma_g * N_g - sc.gamma_e * N_e

        P_tilde = P - np.eye(M)
        h_chain = np.einsum("bi,bim->bm", k, P_tilde)[:, : M - 1]
        h_energy = (k * (sc.battery_range_hours - access)).sum(axis=-1) - op_time

        return KernelResult(
            w_p=w_p, lam=lam, R=R, P=P, n=n, busy=busy, op_time=op_time, margin=margin,
            K=K, k=k, l_c=l_c, l_s=l_s, w_c=w_c, w_s=w_s, block_s=block_s, rho_c=rho_c,
            downtime=downtime, N_e=N_e, N_g=N_g, revenue=revenue, profit=profit,
            rho_ev=1.0 - downtime / np.maximum(N_e, 1e-12),
            flow_res=flow_residual(lam, f),
            stab_slack=opts.rho_max * spec_c.V * xc - q_c * spec_c.tau_c,
            swap_slack=self.swap_cap * xs - q_s,
            h_chain=h_chain,
            h_energy=h_energy,
        )

    def _gasoline_only(self, p, N_vg, f) -> KernelResult:
        """无电动车阶段：只有燃油车，不涉及充电"""
        sc = self.scenario
        tau = sc.trip_time
        batch, M = p.shape
        N_vg = np.maximum(N_vg, self.options.eps_pos)
        w_p = sc.phi / np.sqrt(N_vg)
        lam = realized_demand(sc, p, w_p)
        busy = (lam * w_p[:, :, None] + (lam + f) * tau).sum(axis=-1)
        N_g = N_vg.sum(axis=-1) + busy.sum(axis=-1)
        revenue = (p[:, :, None] * lam * tau).sum(axis=(-1, -2))
        zeros_bm = np.zeros((batch, M))
        zeros_b = np.zeros(batch)
        return KernelResult(
            w_p=w_p, lam=lam, R=zeros_bm, P=np.broadcast_to(np.eye(M), (batch, M, M)).copy(),
            n=np.full((batch, M), 1.0 / M), busy=busy, op_time=zeros_b,
            margin=np.full(batch, sc.battery_range_hours), K=zeros_b, k=zeros_bm,
            l_c=np.full((batch, M), np.nan), l_s=np.full((batch, M), np.nan),
            w_c=zeros_bm, w_s=zeros_bm, block_s=zeros_bm, rho_c=zeros_bm,
            downtime=zeros_b, N_e=zeros_b, N_g=N_g, revenue=revenue,
            profit=revenue - sc.gamma_g * N_g, rho_ev=np.ones(batch),
            flow_res=flow_residual(lam, f), stab_slack=zeros_bm, swap_slack=zeros_bm,
            h_chain=np.zeros((batch, M - 1)), h_energy=zeros_b,
        )
