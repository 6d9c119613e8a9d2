"""
电动车移动链与充电需求

由 EV 流量矩阵 D 得到转移矩阵 P，求其平稳分布 n，再按能量平衡把 n 缩放为各区域充电需求 k。
所有函数均支持前置批维度（最后一维/两维为区域）。
"""
import numpy as np
from scipy.sparse.csgraph import connected_components

from src.model.exceptions import DomainError, InfeasibleError, ReducibleChainError
from src.utils import app_logger


def _masked_product(weight, value):
    """weight·value，weight 为 0 处直接取 0（value 可能为 inf）"""
    weight = np.asarray(weight, dtype=float)
    value = np.asarray(value, dtype=float)
    safe = np.where(weight > 0, value, 0.0)
    return weight * safe


def demand_matrix(N_ve, N_vg, lam, f, w_p, tau):
    """
    EV 流量矩阵 D 与电动车派单比例 R

    Args:
        N_ve: 各区域空闲电动车（须严格为正）
        N_vg: 各区域空闲燃油车
        lam: M×M 需求
        f: M×M 调度流量
        w_p: 各区域接驾时间
        tau: M×M 行程时间

    Returns:
        (D, R)
    """
    N_ve = np.asarray(N_ve, dtype=float)
    N_vg = np.asarray(N_vg, dtype=float)
    if np.any(N_ve <= 0):
        raise DomainError("每个区域的空闲电动车数量必须为正")
    lam = np.asarray(lam, dtype=float)
    f = np.asarray(f, dtype=float)
    w_p = np.asarray(w_p, dtype=float)

    R = N_ve / (N_ve + N_vg)
    D = R[..., :, None] * (lam + f) * tau
    diagonal = N_ve + R * w_p * lam.sum(axis=-1)
    idx = np.arange(D.shape[-1])
    D[..., idx, idx] += diagonal
    return D, R


def transition_matrix(D):
    """
    行归一化得到转移矩阵 P_ij = D_ij / Σ_j D_ij

    Args:
        D: EV 流量矩阵

    Returns:
        行随机矩阵 P
    """
    D = np.asarray(D, dtype=float)
    row_sums = D.sum(axis=-1, keepdims=True)
    if np.any(row_sums <= 0):
        raise DomainError("流量矩阵存在行和为零的行")
    return D / row_sums


def solve_stationary(P):
    """
    直接线性求解平稳分布（不做正性检查，供批量内核使用）

    用归一化方程 Σn=1 替换 (Pᵀ−I) n = 0 的最后一行。批中出现奇异矩阵（可约链）时，
    逐个改用最小二乘，仍失败的成员取 NaN，不影响批中其他成员。
    """
    P = np.asarray(P, dtype=float)
    M = P.shape[-1]
    A = np.swapaxes(P, -1, -2) - np.eye(M)
    A[..., -1, :] = 1.0
    b = np.zeros(P.shape[:-1])
    b[..., -1] = 1.0
    try:
        return np.linalg.solve(A, b[..., None])[..., 0]
    except np.linalg.LinAlgError:
        pass

    flat_A = A.reshape(-1, M, M)
    flat_b = b.reshape(-1, M)
    out = np.full(flat_b.shape, np.nan)
    for idx in range(flat_A.shape[0]):
        try:
            solution, _, rank, _ = np.linalg.lstsq(flat_A[idx], flat_b[idx], rcond=None)
        except np.linalg.LinAlgError:
            continue
        if rank == M:
            out[idx] = solution
    return out.reshape(b.shape)


def stationary_distribution(P):
    """
    转移矩阵 P 的唯一正平稳分布 n（nP = n, Σn = 1）

    P 非严格正时：若不可约则告警后继续求解，可约则报错。

    Args:
        P: M×M 行随机矩阵

    Returns:
        长度为 M 的分布向量
    """
    P = np.asarray(P, dtype=float)
    if P.ndim != 2 or P.shape[0] != P.shape[1]:
        raise DomainError("转移矩阵必须为方阵")
    if np.any(P <= 0):
        n_components, _ = connected_components(P > 0, directed=True, connection="strong")
        if n_components > 1:
            raise ReducibleChainError(f"转移矩阵可约（{n_components} 个强连通分量）")
        app_logger.warning("转移矩阵不是严格正的，按不可约链继续求解")
    n = solve_stationary(P)
    n = np.clip(n, 0.0, None)
    return n / n.sum()


def power_iteration(P, steps: int = 10_000, tol: float = 0.0):
    """幂迭代求平稳分布（作为直接求解的独立对照）"""
    P = np.asarray(P, dtype=float)
    n = np.full(P.shape[0], 1.0 / P.shape[0])
    for _ in range(steps):
        nxt = n @ P
        if tol > 0 and np.max(np.abs(nxt - n)) < tol:
            return nxt
        n = nxt
    return n


def ev_operating_time(N_ve, R, lam, f, w_p, tau):
    """
    电动车非充电时间总量 Σ N_ve + Σ_ij R_i(λ_ij w_p_i + λ_ij τ_ij + f_ij τ_ij)

    即 D 所有元素之和。
    """
    lam = np.asarray(lam, dtype=float)
    busy = (lam * np.asarray(w_p, dtype=float)[..., :, None] + (lam + np.asarray(f, dtype=float)) * tau).sum(axis=-1)
    return (np.asarray(N_ve, dtype=float) + np.asarray(R, dtype=float) * busy).sum(axis=-1)


def feasibility_margin(n, r, l_c, l_s, range_hours: float):
    """可行裕度 φ_E = ℛ − Σ r n l_c − Σ (1−r) n l_s"""
    n = np.asarray(n, dtype=float)
    r = np.asarray(r, dtype=float)
    access = _masked_product(r * n, l_c) + _masked_product((1.0 - r) * n, l_s)
    return range_hours - access.sum(axis=-1)


def total_charging_rate(n, r, l_c, l_s, range_hours: float, ev_operating_time: float) -> float:
    """
    能量平衡下的总充电速率 K = 运营时间 / φ_E

    Args:
        n: 平稳充电需求分布
        r: 充电方式分配比例
        l_c: 到充电站的时间（小时）
        l_s: 到换电站的时间（小时）
        range_hours: 两次补能间的可运营时长 ℛ
        ev_operating_time: 电动车非充电时间总量（辆）

    Returns:
        K（辆/小时）；各区域充电需求 k = n·K
    """
    margin = float(feasibility_margin(n, r, l_c, l_s, range_hours))
    if not margin > 0:
        raise InfeasibleError(f"可行裕度 φ_E={margin:.6g} 不为正，能量平衡无正解", constraint="feasibility_margin")
    return float(ev_operating_time) / margin


def energy_balance_residual(k, r, l_c, l_s, range_hours: float, ev_operating_time) -> float:
    """能量平衡方程的相对残差"""
    k = np.asarray(k, dtype=float)
    r = np.asarray(r, dtype=float)
    supplied = (k * range_hours - _masked_product(r * k, l_c) - _masked_product((1.0 - r) * k, l_s)).sum(axis=-1)
    scale = np.maximum(np.abs(ev_operating_time), 1e-12)
    return np.abs(supplied - ev_operating_time) / scale
