"""
等待时间凸性探针

固定区域充电需求 k，改变设施数量 x，检查单站等待时间 w(k/x) 的单调性与凸性。
"""
from dataclasses import dataclass, asdict
from typing import Any, Dict, List, Optional, Sequence

import numpy as np

from src.model.exceptions import DomainError
from src.model.scenario import ChargeStationSpec, SwapStationSpec
from src.queues.charging import erlang_c_terms
from src.queues.swapping import swap_metrics

TOL_CVX = 1e-6


@dataclass
class ProbeRow:
    """探针表的一行"""
    x: float
    arrival_rate: float
    wait: Optional[float]
    stable: bool
    first_difference: Optional[float] = None
    second_difference: Optional[float] = None
    convex_flag: bool = False
    monotone_flag: bool = False

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


def convexity_probe(queue_kind: str, k_fixed: float, x_range: Sequence[float],
                    charge_spec: ChargeStationSpec, swap_spec: SwapStationSpec,
                    tol_cvx: float = TOL_CVX) -> List[ProbeRow]:
    """
    逐点计算等待时间并给出一阶、二阶差分

    Args:
        queue_kind: "charging" 或 "swapping"
        k_fixed: 区域充电需求（辆/小时）
        x_range: 等间距递增的设施数量
        charge_spec: 充电站规格（换电站电池充电时长亦取自此处）
        swap_spec: 换电站规格
        tol_cvx: 二阶差分容差

    Returns:
        ProbeRow 列表；不稳定点 stable=False、wait=None，不参与差分
    """
    if not k_fixed > 0:
        raise DomainError("k_fixed 必须为正")
    if queue_kind not in ("charging", "swapping"):
        raise DomainError(f"未知队列类型: {queue_kind}")
    xs = np.asarray(list(x_range), dtype=float)
    if xs.size == 0 or np.any(xs <= 0):
        raise DomainError("x_range 必须为非空正数序列")

    rows: List[ProbeRow] = []
    for x in xs:
        lam = k_fixed / x
        if queue_kind == "charging":
            _, _, wait = erlang_c_terms(lam, charge_spec.V, charge_spec.tau_c)
            wait = float(wait)
            stable = bool(np.isfinite(wait))
        else:
            wait = swap_metrics(lam, swap_spec, charge_spec.tau_c).wait
            stable = True
        rows.append(ProbeRow(x=float(x), arrival_rate=float(lam), wait=wait if stable else None, stable=stable))

    for idx in range(1, len(rows)):
        prev, cur = rows[idx - 1], rows[idx]
        if prev.stable and cur.stable:
            cur.first_difference = cur.wait - prev.wait
            cur.monotone_flag = cur.first_difference > tol_cvx

    for idx in range(1, len(rows) - 1):
        left, mid, right = rows[idx - 1], rows[idx], rows[idx + 1]
        if left.stable and mid.stable and right.stable:
            mid.second_difference = right.wait - 2.0 * mid.wait + left.wait
            mid.convex_flag = mid.second_difference < -tol_cvx

    return rows


def probe_flags(rows: Sequence[ProbeRow]) -> Dict[str, int]:
    """统计凸性/单调性告警数量"""
    return {
        "convex_flags": sum(1 for row in rows if row.convex_flag),
        "monotone_flags": sum(1 for row in rows if row.monotone_flag),
        "unstable_points": sum(1 for row in rows if not row.stable),
    }
