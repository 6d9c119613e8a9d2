"""
决策与市场状态数据结构
"""
from dataclasses import dataclass, field
from typing import Any, Dict, List

import numpy as np

from src.model.exceptions import DomainError


def _as_array(values: Any, shape: tuple, name: str) -> np.ndarray:
    array = np.array(values, dtype=float)
    if array.shape != shape:
        raise DomainError(f"{name} 维度应为 {shape}，实际 {array.shape}")
    return array


@dataclass
class PlanningDecision:
    """各阶段新建设施数量 x_c、x_s（T×M，允许小数）"""
    x_c: np.ndarray
    x_s: np.ndarray

    def cumulative(self) -> "CumulativePlan":
        """累计设施数量 x̃"""
        return CumulativePlan(xt_c=np.cumsum(self.x_c, axis=0), xt_s=np.cumsum(self.x_s, axis=0))

    def to_dict(self) -> Dict[str, Any]:
        return {"x_c": self.x_c.tolist(), "x_s": self.x_s.tolist()}


@dataclass
class CumulativePlan:
    """各阶段累计设施数量 x̃_c、x̃_s（T×M，按阶段非减）"""
    xt_c: np.ndarray
    xt_s: np.ndarray

    @classmethod
    def zeros(cls, T: int, M: int) -> "CumulativePlan":
        return cls(xt_c=np.zeros((T, M)), xt_s=np.zeros((T, M)))

    @property
    def T(self) -> int:
        return self.xt_c.shape[0]

    def increments(self) -> PlanningDecision:
        """逐阶段新建数量 x_t = x̃_t − x̃_{t−1}"""
        return PlanningDecision(
            x_c=np.diff(self.xt_c, axis=0, prepend=0.0),
            x_s=np.diff(self.xt_s, axis=0, prepend=0.0),
        )

    def stage(self, t: int) -> np.ndarray:
        """第 t 阶段的 (2, M) 累计数量"""
        return np.vstack([self.xt_c[t], self.xt_s[t]])

    def budget_usage(self, cost_c: float, cost_s: float) -> np.ndarray:
        """累计预算占用 A x̃_t"""
        return cost_c * self.xt_c.sum(axis=1) + cost_s * self.xt_s.sum(axis=1)

    def lexicographic_key(self) -> tuple:
        """平局时按累计方案字典序取最小"""
        return tuple(np.concatenate([self.xt_c.ravel(), self.xt_s.ravel()]).round(9))

    def to_dict(self) -> Dict[str, Any]:
        return {"xt_c": self.xt_c.tolist(), "xt_s": self.xt_s.tolist()}


@dataclass
class OperationalDecision:
    """
    单阶段运营决策

    p: 各区域价格（$/小时）；N_ve/N_vg: 空闲电动车/燃油车数量；
    f: M×M 调度流量（辆/小时）；r: 充电方式分配比例（1 表示全部去充电站）。
    """
    p: np.ndarray
    N_ve: np.ndarray
    N_vg: np.ndarray
    f: np.ndarray
    r: np.ndarray

    @classmethod
    def from_arrays(cls, M: int, p: Any, N_ve: Any, N_vg: Any, f: Any, r: Any) -> "OperationalDecision":
        """按区域数量检查维度后构造"""
        return cls(
            p=_as_array(p, (M,), "p"),
            N_ve=_as_array(N_ve, (M,), "N_ve"),
            N_vg=_as_array(N_vg, (M,), "N_vg"),
            f=_as_array(f, (M, M), "f"),
            r=_as_array(r, (M,), "r"),
        )

    @property
    def M(self) -> int:
        return self.p.shape[0]

    def to_dict(self) -> Dict[str, Any]:
        return {
            "p": self.p.tolist(),
            "N_ve": self.N_ve.tolist(),
            "N_vg": self.N_vg.tolist(),
            "f": self.f.tolist(),
            "r": self.r.tolist(),
        }


@dataclass
class AugmentedDecision:
    """重构问题中的增广运营决策：在 OperationalDecision 基础上把充电需求 k 与 f̃ 作为决策"""
    ops: OperationalDecision
    k: np.ndarray
    f_tilde: np.ndarray

    @classmethod
    def from_operational(cls, ops: OperationalDecision, k: np.ndarray, trip_time: np.ndarray) -> "AugmentedDecision":
        """f̃_i = Σ_j f_ij τ_ij"""
        return cls(ops=ops, k=np.asarray(k, dtype=float), f_tilde=(ops.f * trip_time).sum(axis=1))

    def to_dict(self) -> Dict[str, Any]:
        return {**self.ops.to_dict(), "k": self.k.tolist(), "f_tilde": self.f_tilde.tolist()}


@dataclass
class MarketState:
    """给定（累计方案, 运营决策）后的全部内生量"""
    lam: np.ndarray
    w_p: np.ndarray
    R: np.ndarray
    D: np.ndarray
    P: np.ndarray
    n: np.ndarray
    k: np.ndarray
    K: float
    l_c: np.ndarray
    l_s: np.ndarray
    w_c: np.ndarray
    w_s: np.ndarray
    block_s: np.ndarray
    N_e: float
    N_g: float
    revenue: float
    profit: float
    rho_ev: float
    margin: float
    ev_operating_time: float
    downtime: float
    ev_active: bool = True
    notes: List[str] = field(default_factory=list)

    def to_dict(self) -> Dict[str, Any]:
        """序列化为 JSON 友好的字典"""
        payload: Dict[str, Any] = {}
        for name, value in self.__dict__.items():
            if isinstance(value, np.ndarray):
                # 没有该类设施的区域取值为 nan，输出为 null
                payload[name] = np.where(np.isfinite(value), value, None).tolist()
            elif isinstance(value, (np.floating, np.integer)):
                payload[name] = value.item()
            else:
                payload[name] = value
        payload["lambda"] = payload.pop("lam")
        return payload
