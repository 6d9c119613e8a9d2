"""
整数化报告（仅供参考，不参与上下界计算）
"""
from typing import Any, Dict

import numpy as np

from src.model.decisions import CumulativePlan
from src.model.scenario import Scenario


def rounding_report(plan: CumulativePlan, scenario: Scenario) -> Dict[str, Any]:
    """
    把连续的累计方案取整并检查预算

    取最近整数后按阶段取累计最大值，保证仍然单调非减。

    Args:
        plan: 累计方案
        scenario: 场景

    Returns:
        {"rows": 逐阶段逐区域的取整结果, "stages": 逐阶段预算占用, "over_budget": 是否超出任一累计预算}
    """
    rounded_c = np.maximum.accumulate(np.rint(plan.xt_c), axis=0)
    rounded_s = np.maximum.accumulate(np.rint(plan.xt_s), axis=0)
    rounded = CumulativePlan(xt_c=rounded_c, xt_s=rounded_s)

    rows = []
    for t in range(plan.T):
        for i in range(scenario.M):
            rows.append({
                "stage": t + 1,
                "zone": i,
                "xt_c": float(plan.xt_c[t, i]),
                "xt_s": float(plan.xt_s[t, i]),
                "rounded_c": int(rounded_c[t, i]),
                "rounded_s": int(rounded_s[t, i]),
            })

    usage = rounded.budget_usage(scenario.cost_c, scenario.cost_s)
    limits = scenario.cumulative_budgets
    stages = [
        {
            "stage": t + 1,
            "budget_usage": float(usage[t]),
            "cumulative_budget": float(limits[t]),
            "over_budget": bool(usage[t] > limits[t] + 1e-9),
        }
        for t in range(plan.T)
    ]
    return {
        "rows": rows,
        "stages": stages,
        "over_budget": any(stage["over_budget"] for stage in stages),
    }
