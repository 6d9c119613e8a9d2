"""
多阶段规划问题的数值描述

原问题以各阶段新建数量 x_t 为设施变量（累计单调性自动满足），充电需求由能量平衡消去；
松弛问题以累计数量 x̃_t 和充电需求 k 为变量，去掉流量平衡，保留 M−1 行链方程与能量行。
两者共用同一套阶段布局、盒约束与按阶段批量的前向差分导数。
"""
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from src.config.solver_config import SolverConfig
from src.economics.kernel import KernelResult, StageKernel
from src.model.decisions import CumulativePlan, OperationalDecision
from src.model.exceptions import DomainError
from src.model.scenario import Scenario
from src.queues.swapping import SwapWaitTable

MIXED = "mixed"
CHARGING_ONLY = "charging_only"
SWAPPING_ONLY = "swapping_only"
POLICIES = (MIXED, CHARGING_ONLY, SWAPPING_ONLY)

MODES = ("joint", "charging_only")


def resolve_policy(mode: str, policy: Optional[Sequence[str]], M: int) -> Tuple[str, ...]:
    """
    把运行模式与逐区域限制合成为逐区域策略

    Args:
        mode: joint 或 charging_only
        policy: 逐区域策略（mixed / charging_only / swapping_only），给出时优先
        M: 区域数

    Returns:
        长度为 M 的策略元组
    """
    if policy is not None:
        policy = tuple(policy)
        if len(policy) != M or any(item not in POLICIES for item in policy):
            raise DomainError(f"逐区域策略必须是 {M} 个 {POLICIES} 之一")
        return policy
    if mode not in MODES:
        raise DomainError(f"未知的运行模式: {mode}")
    return (CHARGING_ONLY if mode == "charging_only" else MIXED,) * M


@dataclass(frozen=True)
class StageLayout:
    """阶段内变量排列：xc, xs, p, N_ve, N_vg, r, f(非对角), [k]"""
    M: int
    with_k: bool = False

    def _block(self, index: int) -> slice:
        return slice(index * self.M, (index + 1) * self.M)

    @property
    def xc(self) -> slice:
        return self._block(0)

    @property
    def xs(self) -> slice:
        return self._block(1)

    @property
    def p(self) -> slice:
        return self._block(2)

    @property
    def n_ve(self) -> slice:
        return self._block(3)

    @property
    def n_vg(self) -> slice:
        return self._block(4)

    @property
    def r(self) -> slice:
        return self._block(5)

    @property
    def f(self) -> slice:
        start = 6 * self.M
        return slice(start, start + self.M * (self.M - 1))

    @property
    def k(self) -> slice:
        start = self.f.stop
        return slice(start, start + self.M)

    @property
    def size(self) -> int:
        return self.k.stop if self.with_k else self.f.stop

    @property
    def x_columns(self) -> np.ndarray:
        return np.arange(0, 2 * self.M)

    def off_diagonal(self) -> Tuple[np.ndarray, np.ndarray]:
        return np.nonzero(~np.eye(self.M, dtype=bool))

    def unpack(self, U: np.ndarray) -> dict:
        """(B, size) → 各决策的批量数组"""
        U = np.atleast_2d(U)
        rows, cols = self.off_diagonal()
        f = np.zeros((U.shape[0], self.M, self.M))
        f[:, rows, cols] = U[:, self.f]
        return {
            "xc": U[:, self.xc], "xs": U[:, self.xs], "p": U[:, self.p],
            "N_ve": U[:, self.n_ve], "N_vg": U[:, self.n_vg], "r": U[:, self.r],
            "f": f, "k": U[:, self.k] if self.with_k else None,
        }

    def pack(self, xc, xs, p, N_ve, N_vg, r, f, k=None) -> np.ndarray:
        rows, cols = self.off_diagonal()
        u = np.zeros(self.size)
        u[self.xc], u[self.xs], u[self.p] = xc, xs, p
        u[self.n_ve], u[self.n_vg], u[self.r] = N_ve, N_vg, r
        u[self.f] = np.asarray(f)[rows, cols]
        if self.with_k:
            u[self.k] = 0.0 if k is None else k
        return u


@dataclass(frozen=True)
class ConstraintRow:
    """约束行的标识；value/scale 为求解器看到的归一化值"""
    kind: str
    stage: Optional[int]
    zone: Optional[int]
    facility: Optional[str]
    scale: float


@dataclass
class NLPValues:
    """归一化变量 z 上的目标（极小化形式）与约束"""
    f: float
    grad: np.ndarray
    eq: np.ndarray
    jac_eq: np.ndarray
    ineq: np.ndarray
    jac_in: np.ndarray


@dataclass
class ProblemEvaluation:
    """物理变量 V 上的评估结果"""
    objective: float
    grad: np.ndarray
    eq: np.ndarray
    jac_eq: np.ndarray
    ineq: np.ndarray
    jac_in: np.ndarray
    stages: List[KernelResult]


class PlanningProblem:
    """原问题（relaxed=False）或松弛重构问题（relaxed=True）"""

    def __init__(self, scenario: Scenario, config: SolverConfig,
                 swap_table: Optional[SwapWaitTable] = None, relaxed: bool = False,
                 policy: Optional[Sequence[str]] = None, k_max: Optional[np.ndarray] = None):
        self.scenario = scenario
        self.config = config
        self.options = config.optimizer
        self.relaxed = relaxed
        self.M = scenario.M
        self.T = scenario.T
        self.layout = StageLayout(self.M, with_k=relaxed)
        self.policy = resolve_policy("joint", policy, self.M) if policy is not None else (MIXED,) * self.M
        self.allow_c = np.array([item != SWAPPING_ONLY for item in self.policy])
        self.allow_s = np.array([item != CHARGING_ONLY for item in self.policy])
        self.ev_active = (scenario.cumulative_budgets > 0) & (scenario.cap > 0)
        self.swap_table = swap_table
        self.weights = self.options.discount ** np.arange(self.T)
        self.kernels = [
            StageKernel(scenario, self.options, swap_table, ev_active=bool(active))
            for active in self.ev_active
        ]
        self.swap_cap = self.options.swap_load_factor * scenario.swap_spec.service_rate

        demand_total = float(scenario.base_demand.sum())
        busy_total = float((scenario.base_demand * scenario.trip_time).sum())
        self.flow_scale = max(demand_total / self.M, 1e-6)
        self.energy_scale = max(busy_total / self.M, 1.0)
        self.obj_scale = max(1.0, scenario.outside_price * busy_total * float(self.weights.sum()))

        self._build_bounds(k_max)
        self._build_rows()
        self._build_linear()

    # ------------------------------------------------------------------ 布局

    def _build_bounds(self, k_max: Optional[np.ndarray]) -> None:
        L, M, T = self.layout, self.M, self.T
        sc, boxes, opts = self.scenario, self.config.boxes, self.options
        lower = np.zeros((T, L.size))
        upper = np.zeros((T, L.size))
        upper[:, L.xc] = sc.cap
        upper[:, L.xs] = sc.cap
        upper[:, L.p] = boxes.price_max_factor * sc.outside_price
        lower[:, L.n_ve] = opts.eps_pos
        upper[:, L.n_ve] = boxes.idle_max
        upper[:, L.n_vg] = boxes.idle_max
        upper[:, L.r] = 1.0
        # 调度流量取严格正下限，移动链始终不可约
        lower[:, L.f] = opts.eps_pos
        upper[:, L.f] = boxes.flow_max
        if L.with_k:
            lower[:, L.k] = opts.eps_pos
            limit = boxes.idle_max if k_max is None else k_max
            upper[:, L.k] = np.broadcast_to(np.asarray(limit, dtype=float), (T, M))

        fixed = np.full((T, L.size), np.nan)
        xc_cols = np.arange(L.xc.start, L.xc.stop)
        xs_cols = np.arange(L.xs.start, L.xs.stop)
        r_cols = np.arange(L.r.start, L.r.stop)
        fixed[:, xc_cols[~self.allow_c]] = 0.0
        fixed[:, xs_cols[~self.allow_s]] = 0.0
        fixed[:, r_cols[~self.allow_s]] = 1.0
        fixed[:, r_cols[~self.allow_c]] = 0.0
        for t in range(T):
            if not self.ev_active[t]:
                lower[t, L.n_vg] = opts.eps_pos
                fixed[t, L.xc] = 0.0
                fixed[t, L.xs] = 0.0
                fixed[t, L.n_ve] = 0.0
                fixed[t, L.r] = 1.0
                if L.with_k:
                    fixed[t, L.k] = 0.0
            elif not self.relaxed and self.scenario.budgets[t] <= 0:
                # 本阶段没有新增预算
                fixed[t, L.xc] = 0.0
                fixed[t, L.xs] = 0.0

        pinned = ~np.isnan(fixed)
        lower = np.where(pinned, fixed, lower)
        upper = np.where(pinned, fixed, upper)
        self.lower = lower
        self.upper = upper
        self.free = upper > lower
        self.free_index = np.flatnonzero(self.free.ravel())
        self.span = (upper - lower).ravel()[self.free_index]

        # 阶段局部（累计）坐标下需要差分的列
        self.stage_free = self.free.copy()
        if not self.relaxed:
            x_cols = L.x_columns
            self.stage_free[:, x_cols] = np.logical_or.accumulate(self.free[:, x_cols], axis=0)
        self.stage_upper = upper.copy()
        if not self.relaxed:
            self.stage_upper[:, L.x_columns] = self.scenario.cap

    def _build_rows(self) -> None:
        M = self.M
        sc = self.scenario
        eq_rows: List[List[ConstraintRow]] = []
        in_rows: List[List[ConstraintRow]] = []
        for t in range(self.T):
            eq, ineq = [], []
            if not self.relaxed:
                eq += [ConstraintRow("flow", t, i, None, self.flow_scale) for i in range(M)]
            if self.ev_active[t]:
                if self.relaxed:
                    eq += [ConstraintRow("chain", t, m, None, self.flow_scale) for m in range(M - 1)]
                    ineq.append(ConstraintRow("energy", t, None, None, self.energy_scale))
                else:
                    ineq.append(ConstraintRow("margin", t, None, None, sc.battery_range_hours))
                ineq += [ConstraintRow("stability", t, i, "c", float(sc.charge_spec.V))
                         for i in range(M) if self.allow_c[i]]
                ineq += [ConstraintRow("swap_load", t, i, "s", self.swap_cap)
                         for i in range(M) if self.allow_s[i]]
            eq_rows.append(eq)
            in_rows.append(ineq)
        self.stage_eq_rows = eq_rows
        self.stage_in_rows = in_rows

    def _build_linear(self) -> None:
        """线性约束 value = A·vec(V) + c ≥ 0"""
        L, M, T = self.layout, self.M, self.T
        sc = self.scenario
        width = T * L.size
        rows, matrix, offsets = [], [], []

        def column(t: int, col: int) -> int:
            return t * L.size + col

        def budget_row(t: int, stages: Sequence[int], limit: float) -> None:
            a = np.zeros(width)
            for tau in stages:
                for i in range(M):
                    a[column(tau, L.xc.start + i)] = -sc.cost_c
                    a[column(tau, L.xs.start + i)] = -sc.cost_s
            rows.append(ConstraintRow("budget", t, None, None, max(limit, 1e-9)))
            matrix.append(a)
            offsets.append(limit)

        if not self.relaxed:
            for t in range(T):
                if self.free[t, L.xc].any() or self.free[t, L.xs].any():
                    budget_row(t, [t], float(sc.budgets[t]))
            if sc.cap > 0:
                for facility, block, allowed in (("c", L.xc, self.allow_c), ("s", L.xs, self.allow_s)):
                    for i in range(M):
                        if not allowed[i] or not self.free[:, block.start + i].any():
                            continue
                        a = np.zeros(width)
                        for t in range(T):
                            a[column(t, block.start + i)] = -1.0
                        rows.append(ConstraintRow("cap", None, i, facility, sc.cap))
                        matrix.append(a)
                        offsets.append(sc.cap)
        else:
            cumulative = sc.cumulative_budgets
            for t in range(T):
                if self.ev_active[t]:
                    budget_row(t, [t], float(cumulative[t]))
            for t in range(T):
                if not self.ev_active[t]:
                    continue
                for facility, block, allowed in (("c", L.xc, self.allow_c), ("s", L.xs, self.allow_s)):
                    for i in range(M):
                        if not allowed[i]:
                            continue
                        a = np.zeros(width)
                        a[column(t, block.start + i)] = 1.0
                        if t > 0:
                            a[column(t - 1, block.start + i)] = -1.0
                        rows.append(ConstraintRow("monotone", t, i, facility, 1.0))
                        matrix.append(a)
                        offsets.append(0.0)

        self.linear_rows = rows
        self.linear_matrix = np.array(matrix).reshape(len(rows), width)
        self.linear_offset = np.array(offsets, dtype=float)
        self.linear_scale = np.array([row.scale for row in rows], dtype=float)

    @property
    def eq_rows(self) -> List[ConstraintRow]:
        return [row for stage in self.stage_eq_rows for row in stage]

    @property
    def in_rows(self) -> List[ConstraintRow]:
        return [row for stage in self.stage_in_rows for row in stage] + self.linear_rows

    # ------------------------------------------------------------------ 变量映射

    @property
    def n_free(self) -> int:
        return self.free_index.size

    def stage_values(self, V: np.ndarray) -> np.ndarray:
        """优化变量 → 各阶段的累计设施数量与运营决策"""
        U = np.array(V, dtype=float)
        if not self.relaxed:
            cols = self.layout.x_columns
            U[:, cols] = np.cumsum(V[:, cols], axis=0)
        return U

    def variable_gradient(self, G_stage: np.ndarray) -> np.ndarray:
        """阶段局部梯度 → 优化变量梯度（链式法则）"""
        G = np.array(G_stage, dtype=float)
        if not self.relaxed:
            cols = self.layout.x_columns
            G[:, cols] = np.cumsum(G_stage[::-1, cols], axis=0)[::-1]
        return G

    def to_z(self, V: np.ndarray) -> np.ndarray:
        V = np.clip(V, self.lower, self.upper)
        return (V.ravel()[self.free_index] - self.lower.ravel()[self.free_index]) / self.span

    def from_z(self, z: np.ndarray) -> np.ndarray:
        V = self.lower.copy().ravel()
        V[self.free_index] = self.lower.ravel()[self.free_index] + self.span * np.clip(z, 0.0, 1.0)
        return V.reshape(self.lower.shape)

    def clip(self, V: np.ndarray) -> np.ndarray:
        return np.clip(V, self.lower, self.upper)

    # ------------------------------------------------------------------ 评估

    def _stage_constraints(self, t: int, res: KernelResult) -> Tuple[np.ndarray, np.ndarray]:
        eq, ineq = [], []
        if not self.relaxed:
            eq.append(res.flow_res / self.flow_scale)
        if self.ev_active[t]:
            if self.relaxed:
                eq.append(res.h_chain / self.flow_scale)
                ineq.append((res.h_energy / self.energy_scale)[:, None])
            else:
                margin = (res.margin - self.options.eps_pos) / self.scenario.battery_range_hours
                ineq.append(margin[:, None])
            ineq.append(res.stab_slack[:, self.allow_c] / self.scenario.charge_spec.V)
            ineq.append(res.swap_slack[:, self.allow_s] / self.swap_cap)
        batch = res.profit.shape[0]
        eq_arr = np.concatenate(eq, axis=1) if eq else np.zeros((batch, 0))
        in_arr = np.concatenate(ineq, axis=1) if ineq else np.zeros((batch, 0))
        return eq_arr, in_arr

    def evaluate_stage(self, t: int, U_batch: np.ndarray) -> KernelResult:
        parts = self.layout.unpack(U_batch)
        return self.kernels[t].evaluate(**parts)

    def evaluate(self, V: np.ndarray, derivatives: bool = True) -> ProblemEvaluation:
        """
        计算目标、约束及（可选）前向差分导数

        Returns:
            ProblemEvaluation，Jacobian 的列对应 vec(V)
        """
        L = self.layout
        size = L.size
        U = self.stage_values(V)
        width = self.T * size
        objective = 0.0
        grad_stage = np.zeros_like(U)
        eq_blocks, in_blocks, jeq_blocks, jin_blocks, stages = [], [], [], [], []

        for t in range(self.T):
            base = U[t]
            cols = np.flatnonzero(self.stage_free[t]) if derivatives else np.zeros(0, dtype=int)
            steps = self.options.fd_step * np.maximum(1.0, np.abs(base[cols]))
            steps = np.where(base[cols] + steps > self.stage_upper[t, cols], -steps, steps)
            batch = np.repeat(base[None, :], 1 + cols.size, axis=0)
            batch[1 + np.arange(cols.size), cols] += steps

            res = self.evaluate_stage(t, batch)
            eq, ineq = self._stage_constraints(t, res)
            weight = self.weights[t]
            objective += weight * res.profit[0]
            stages.append(res)
            eq_blocks.append(eq[0])
            in_blocks.append(ineq[0])

            if not derivatives:
                continue
            grad_stage[t, cols] = weight * (res.profit[1:] - res.profit[0]) / steps
            d_eq = (eq[1:] - eq[0]) / steps[:, None]
            d_in = (ineq[1:] - ineq[0]) / steps[:, None]
            jeq_blocks.append(self._expand_rows(t, cols, d_eq.T, width))
            jin_blocks.append(self._expand_rows(t, cols, d_in.T, width))

        lin_vals = (self.linear_matrix @ V.ravel() + self.linear_offset) / self.linear_scale
        eq_vals = np.concatenate(eq_blocks)
        in_vals = np.concatenate(in_blocks + [lin_vals])

        if derivatives:
            grad = self.variable_gradient(grad_stage).ravel()
            jac_eq = np.vstack(jeq_blocks)
            jac_in = np.vstack(jin_blocks + [self.linear_matrix / self.linear_scale[:, None]])
        else:
            grad = np.zeros(width)
            jac_eq = np.zeros((eq_vals.size, width))
            jac_in = np.zeros((in_vals.size, width))

        return ProblemEvaluation(
            objective=float(objective), grad=grad, eq=eq_vals, jac_eq=jac_eq,
            ineq=in_vals, jac_in=jac_in, stages=stages,
        )

    def _expand_rows(self, t: int, cols: np.ndarray, d_rows: np.ndarray, width: int) -> np.ndarray:
        """阶段 t 的行导数（对阶段局部列）展开到 vec(V) 的列"""
        size = self.layout.size
        out = np.zeros((d_rows.shape[0], width))
        out[:, t * size + cols] = d_rows
        if not self.relaxed:
            x_mask = np.isin(cols, self.layout.x_columns)
            for tau in range(t):
                out[:, tau * size + cols[x_mask]] = d_rows[:, x_mask]
        return out

    def nlp(self, z: np.ndarray) -> NLPValues:
        """归一化变量上的极小化形式（供增广拉格朗日使用）"""
        ev = self.evaluate(self.from_z(z))
        idx = self.free_index
        return NLPValues(
            f=-ev.objective / self.obj_scale,
            grad=-ev.grad[idx] * self.span / self.obj_scale,
            eq=ev.eq,
            jac_eq=ev.jac_eq[:, idx] * self.span,
            ineq=ev.ineq,
            jac_in=ev.jac_in[:, idx] * self.span,
        )

    def violation(self, V: np.ndarray) -> float:
        """归一化约束的最大违背量"""
        ev = self.evaluate(V, derivatives=False)
        worst_eq = float(np.max(np.abs(ev.eq))) if ev.eq.size else 0.0
        worst_in = float(np.max(np.maximum(-ev.ineq, 0.0))) if ev.ineq.size else 0.0
        return max(worst_eq, worst_in)

    # ------------------------------------------------------------------ 与解结构互转

    def from_solution(self, plan: CumulativePlan, operations: Sequence[OperationalDecision],
                      k: Optional[Sequence[np.ndarray]] = None) -> np.ndarray:
        """由累计方案与运营决策构造优化变量"""
        L = self.layout
        xc, xs = plan.xt_c, plan.xt_s
        if not self.relaxed:
            xc = np.diff(xc, axis=0, prepend=0.0)
            xs = np.diff(xs, axis=0, prepend=0.0)
        V = np.zeros((self.T, L.size))
        for t, ops in enumerate(operations):
            V[t] = L.pack(xc[t], xs[t], ops.p, ops.N_ve, ops.N_vg, ops.r, ops.f,
                          None if k is None else k[t])
        return self.clip(V)

    def to_solution(self, V: np.ndarray) -> Tuple[CumulativePlan, List[OperationalDecision], List[Optional[np.ndarray]]]:
        """优化变量 → (累计方案, 各阶段运营决策, 各阶段 k（仅松弛问题）)"""
        L = self.layout
        U = self.stage_values(V)
        plan = CumulativePlan(xt_c=U[:, L.xc].copy(), xt_s=U[:, L.xs].copy())
        operations, ks = [], []
        for t in range(self.T):
            parts = L.unpack(U[t][None, :])
            operations.append(OperationalDecision.from_arrays(
                self.M, parts["p"][0], parts["N_ve"][0], parts["N_vg"][0], parts["f"][0], parts["r"][0],
            ))
            ks.append(parts["k"][0].copy() if L.with_k else None)
        return plan, operations, ks
