"""
充电站排队模型（M/M/V，Erlang C）与设施到达时间
"""
from dataclasses import dataclass, asdict
from typing import Any, Dict

import numpy as np

from src.model.exceptions import DomainError, UnstableQueueError
from src.model.scenario import ChargeStationSpec


@dataclass
class QueueMetrics:
    """排队指标：利用率、空闲概率、等待时间（小时）、阻塞概率"""
    utilization: float
    empty_prob: float
    wait: float
    block: float = 0.0
    L: float = 0.0

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


def access_time(x_tilde, psi: float):
    """
    到设施的行驶时间 ψ/√x̃

    Args:
        x_tilde: 区域内累计设施数量
        psi: 设施可达性常数（小时·站^½）

    Returns:
        小时
    """
    x = np.asarray(x_tilde, dtype=float)
    if np.any(x <= 0):
        raise DomainError("区域内没有该类设施（x̃ <= 0）")
    result = psi / np.sqrt(x)
    return float(result) if result.ndim == 0 else result


def erlang_c_terms(lam, V: int, tau_c: float):
    """
    Erlang C 的向量化计算

    对 ρ >= 1 的位置返回 wait=inf、empty_prob=0，不抛异常。

    Returns:
        (rho, empty_prob, wait)
    """
    lam = np.asarray(lam, dtype=float)
    offered = lam * tau_c
    rho = offered / V

    # a^v/v! 逐项累乘
    term = np.ones_like(offered)
    partial = np.ones_like(offered)
    for v in range(1, V):
        term = term * offered / v
        partial = partial + term
    term_V = term * offered / V

    stable = rho < 1.0
    gap = np.where(stable, 1.0 - rho, 1.0)
    empty_prob = np.where(stable, 1.0 / (partial + term_V / gap), 0.0)
    wait = np.where(stable, empty_prob * term_V * (tau_c / V) / gap ** 2, np.inf)
    return rho, empty_prob, wait


def erlang_c_wait(lambda_bar_c: float, spec: ChargeStationSpec) -> QueueMetrics:
    """
    单个充电站的期望排队等待时间

    P₀ 的求和从 v=0 开始（标准 Erlang C）。

    Args:
        lambda_bar_c: 单站到达率（辆/小时）
        spec: 充电站规格

    Returns:
        QueueMetrics
    """
    if lambda_bar_c < 0:
        raise DomainError("到达率必须非负")
    rho, empty_prob, wait = erlang_c_terms(lambda_bar_c, spec.V, spec.tau_c)
    rho = float(rho)
    if rho >= 1.0:
        raise UnstableQueueError(rho)
    wait = float(wait)
    return QueueMetrics(
        utilization=rho,
        empty_prob=float(empty_prob),
        wait=wait,
        block=0.0,
        L=lambda_bar_c * (wait + spec.tau_c),
    )
