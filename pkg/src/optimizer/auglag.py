"""
增广拉格朗日外层循环

内层在 [0,1]^n 盒约束上用 L-BFGS-B 极小化 PHR 增广函数；
外层按违背量判断是更新乘子还是放大罚参数。
"""
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.optimize import Bounds, minimize

from src.config.solver_config import OptimizerOptions
from src.optimizer.problem import NLPValues
from src.utils import app_logger

PENALTY_MAX = 1e8


@dataclass
class ALResult:
    """增广拉格朗日求解结果"""
    z: np.ndarray
    values: NLPValues
    y_eq: np.ndarray
    y_in: np.ndarray
    penalty: float
    violation: float
    outer_iterations: int
    converged: bool

    def summary(self) -> dict:
        return {
            "violation": self.violation,
            "outer_iterations": self.outer_iterations,
            "penalty": self.penalty,
            "converged": self.converged,
        }


def max_violation(values: NLPValues) -> float:
    """等式 |h| 与不等式 max(0, −c) 的最大值"""
    worst_eq = float(np.max(np.abs(values.eq))) if values.eq.size else 0.0
    worst_in = float(np.max(np.maximum(-values.ineq, 0.0))) if values.ineq.size else 0.0
    return max(worst_eq, worst_in)


def augmented_lagrangian(nlp: Callable[[np.ndarray], NLPValues], z0: np.ndarray,
                         options: OptimizerOptions, label: str = "") -> ALResult:
    """
    求解 min f(z) s.t. h(z)=0, c(z)>=0, 0<=z<=1

    Args:
        nlp: 返回目标、约束及其导数的函数
        z0: 初始点
        options: 迭代次数、容差与罚参数设置
        label: 日志标识

    Returns:
        ALResult
    """
    z = np.clip(np.asarray(z0, dtype=float), 0.0, 1.0)
    values = nlp(z)
    y_eq = np.zeros(values.eq.size)
    y_in = np.zeros(values.ineq.size)
    penalty = options.penalty_init
    bounds = Bounds(np.zeros(z.size), np.ones(z.size))
    update_tol = max(0.1, options.kkt_tol)
    converged = False

    def merit(point: np.ndarray):
        v = nlp(point)
        shifted = np.maximum(y_in - penalty * v.ineq, 0.0)
        value = (
            v.f
            + y_eq @ v.eq
            + 0.5 * penalty * (v.eq @ v.eq)
            + (shifted @ shifted - y_in @ y_in) / (2.0 * penalty)
        )
        if not np.isfinite(value):
            return 1e30, np.zeros_like(point)
        grad = v.grad + v.jac_eq.T @ (y_eq + penalty * v.eq) - v.jac_in.T @ shifted
        return value, grad

    outer = 0
    violation = max_violation(values)
    for outer in range(1, options.outer_iters + 1):
        result = minimize(
            merit, z, jac=True, method="L-BFGS-B", bounds=bounds,
            options={"maxiter": options.max_iters, "ftol": 1e-13, "gtol": 1e-9},
        )
        step = float(np.max(np.abs(result.x - z))) if z.size else 0.0
        z = result.x
        values = nlp(z)
        violation = max_violation(values)
        app_logger.debug(
            f"[{label}] 外层迭代 {outer}: 目标={values.f:.8g}, 违背={violation:.3e}, "
            f"罚参数={penalty:.3g}, 步长={step:.3e}"
        )

        if violation <= options.kkt_tol and step <= 1e-5:
            converged = True
            break

        if violation <= update_tol:
            y_eq = y_eq + penalty * values.eq
            y_in = np.maximum(y_in - penalty * values.ineq, 0.0)
            update_tol = max(update_tol / penalty ** 0.9, options.kkt_tol)
        else:
            penalty = min(penalty * options.penalty_growth, PENALTY_MAX)
            update_tol = max(0.1 / penalty ** 0.1, options.kkt_tol)

    return ALResult(
        z=z, values=values, y_eq=y_eq, y_in=y_in, penalty=penalty,
        violation=violation, outer_iterations=outer, converged=converged,
    )
