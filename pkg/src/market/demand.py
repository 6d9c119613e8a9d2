"""
乘客需求、接驾时间与流量平衡
"""
from typing import Callable

import numpy as np
from scipy.special import expit

from src.model.exceptions import DomainError

# 份额函数签名：(出行成本, 外部选择成本, 敏感度) -> 选择网约车的比例
ShareFunction = Callable[[np.ndarray, np.ndarray, float], np.ndarray]


def pickup_time(N_ve_i, N_vg_i, phi: float):
    """
    平方根法则下的接驾时间 w_p = φ/√(N_ve + N_vg)

    Args:
        N_ve_i: 空闲电动车数量（可为数组）
        N_vg_i: 空闲燃油车数量（可为数组）
        phi: 接驾时间常数（小时·辆^½）

    Returns:
        接驾时间（小时）
    """
    total = np.asarray(N_ve_i, dtype=float) + np.asarray(N_vg_i, dtype=float)
    if np.any(total <= 0):
        raise DomainError("空闲车辆总数必须为正")
    result = phi / np.sqrt(total)
    return float(result) if result.ndim == 0 else result


def logit_share(cost, outside_cost, sensitivity: float):
    """二项 logit 份额 exp(−εc)/(exp(−εc)+exp(−εc⁰))"""
    return expit(sensitivity * (np.asarray(outside_cost) - np.asarray(cost)))


def demand(lambda_bar_ij, p_i, tau_ij, w_p_i, alpha: float, eps_logit: float, p0: float,
           share: ShareFunction = logit_share):
    """
    实际网约车需求 λ_ij

    Args:
        lambda_bar_ij: 潜在需求（次/小时）
        p_i: 起点区域价格（$/小时）
        tau_ij: 行程时间（小时）
        w_p_i: 接驾时间（小时）
        alpha: 时间价值（$/小时）
        eps_logit: logit 敏感度（1/$）
        p0: 外部选择单位时间成本（$/小时）
        share: 份额函数，默认二项 logit

    Returns:
        需求（次/小时），严格位于 (0, λ̄) 内（λ̄>0 时）
    """
    tau = np.asarray(tau_ij, dtype=float)
    cost = np.asarray(p_i, dtype=float) * tau + alpha * np.asarray(w_p_i, dtype=float)
    outside = p0 * tau
    result = np.asarray(lambda_bar_ij, dtype=float) * share(cost, outside, eps_logit)
    return float(result) if np.ndim(result) == 0 else result


def realized_demand(scenario, p: np.ndarray, w_p: np.ndarray) -> np.ndarray:
    """整张 OD 需求矩阵，p 与 w_p 按起点区域广播（支持前置批维度）"""
    p = np.asarray(p, dtype=float)[..., :, None]
    w_p = np.asarray(w_p, dtype=float)[..., :, None]
    return demand(
        scenario.base_demand, p, scenario.trip_time, w_p,
        scenario.alpha, scenario.logit_sensitivity, scenario.outside_price,
    )


def flow_residual(lam: np.ndarray, f: np.ndarray) -> np.ndarray:
    """
    各区域流量平衡残差 Σ_j(λ_ij+f_ij) − Σ_j(λ_ji+f_ji)

    Args:
        lam: M×M 需求（可带前置批维度）
        f: M×M 调度流量

    Returns:
        长度为 M 的残差，全零表示流量平衡；各分量之和恒为 0
    """
    total = np.asarray(lam, dtype=float) + np.asarray(f, dtype=float)
    return total.sum(axis=-1) - total.sum(axis=-2)
