"""
实验编排

单次求解、预算扫描、部署优先级对比与排队模型校验。每个函数写出结果文件并返回结果对象，
退出码由 src.cli.main 决定。
"""
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

from src.bound.report import OptimalityReport, certify, comparison_deltas
from src.cli.artifacts import metadata, write_csv, write_json
from src.config.solver_config import SolverConfig
from src.model.exceptions import InfeasibleError, ScenarioValidationError, UnstableQueueError
from src.model.scenario import ChargeStationSpec, Scenario, SwapStationSpec
from src.optimizer.problem import POLICIES
from src.optimizer.solver import solve_original
from src.queues.charging import erlang_c_wait
from src.queues.probe import ProbeRow, convexity_probe, probe_flags
from src.queues.swapping import get_swap_table, swap_metrics
from src.simcheck.des import des_mmV, des_swap
from src.utils import app_logger

BOUNDS_COLUMNS = ("scenario", "mode", "budget", "LB", "UB", "gap_pct", "ub_margin", "refined", "ill_conditioned")
DEPLOYMENT_COLUMNS = ("budget", "mode", "zone", "stage", "dx_c", "dx_s", "xt_c", "xt_s")
TRACE_COLUMNS = ("budget", "mode", "stage", "profit", "revenue", "N_e", "N_g", "K", "rho_ev",
                 "mean_w_p", "mean_w_c", "mean_w_s", "max_block_s")
COMPARISON_COLUMNS = ("budget", "mode", "total_profit", "long_run_profit", "avg_utilization", "long_run_utilization")
DELTA_COLUMNS = ("budget", "total_profit_delta_pct", "long_run_profit_delta_pct",
                 "avg_utilization_delta", "long_run_utilization_delta")
SUMMARY_COLUMNS = ("budget", "mode", "LB", "UB", "gap_pct", "elapsed_s")
PRIORITY_COLUMNS = ("budget", "low_policy", "high_policy", "status", "profit", "rho_ev")
FRONTIER_COLUMNS = ("budget", "low_policy", "high_policy", "profit")
PROBE_COLUMNS = ("x", "arrival_rate", "wait", "stable", "first_difference", "second_difference",
                 "convex_flag", "monotone_flag")
DES_COLUMNS = ("queue", "x", "arrival_rate", "analytic_wait", "sim_wait", "wait_ci", "analytic_block",
               "sim_block", "block_ci", "tolerance", "ok")

SWEEP_MODES = ("charging_only", "joint")

# 校验排队模型的默认设置
PROBE_K = 10.0
PROBE_X = tuple(float(x) for x in range(1, 21))
DES_ARRIVALS = 1_000_000
CHARGE_REL_TOL = 0.03
SWAP_REL_TOL = 0.05
# 0.05 分钟
WAIT_ABS_TOL = 0.05 / 60.0
BLOCK_TOL = 0.01


def check_budgets(budgets: Sequence[float]) -> List[float]:
    """预算序列必须为正且严格递增"""
    budgets = [float(b) for b in budgets]
    if not budgets:
        raise ScenarioValidationError("budgets", "至少需要一个预算")
    if any(not b > 0 for b in budgets):
        raise ScenarioValidationError("budgets", "预算必须为正")
    if any(b2 <= b1 for b1, b2 in zip(budgets, budgets[1:])):
        raise ScenarioValidationError("budgets", "预算必须严格递增")
    return budgets


def _write_report_tables(out_dir: Path, reports: Sequence[OptimalityReport], meta: Dict[str, Any]) -> None:
    write_csv(out_dir / "bounds.csv", [r.bounds_row() for r in reports], BOUNDS_COLUMNS, meta)
    write_csv(out_dir / "deployment.csv", [row for r in reports for row in r.deployment_rows()],
              DEPLOYMENT_COLUMNS, meta)
    write_csv(out_dir / "traces.csv", [row for r in reports for row in r.trace_rows()], TRACE_COLUMNS, meta)


def run_solve(scenario: Scenario, config: SolverConfig, out_dir: Path, mode: str = "joint",
              workers: Optional[int] = None) -> OptimalityReport:
    """
    求解单个场景并写出 solution.json、bounds.csv、deployment.csv、traces.csv

    Raises:
        InfeasibleError: 原问题不可行
    """
    report = certify(scenario, config, mode=mode, workers=workers)
    meta = metadata(scenario, config.optimizer.seed, {"command": "solve", "mode": mode})
    write_json(out_dir / "solution.json", {**report.to_dict(), "metadata": meta})
    _write_report_tables(out_dir, [report], meta)
    return report


@dataclass
class SweepResult:
    """预算扫描结果，按 (模式, 预算) 索引"""
    budgets: List[float]
    reports: Dict[Tuple[str, float], OptimalityReport] = field(default_factory=dict)
    deltas: List[Dict[str, Any]] = field(default_factory=list)
    # 每个 (模式, 预算) 的求解耗时（秒）
    elapsed: Dict[Tuple[str, float], float] = field(default_factory=dict)

    def ordered(self) -> List[OptimalityReport]:
        return [self.reports[key] for key in sorted(self.reports, key=lambda key: (key[1], key[0]))]

    def summary_rows(self) -> List[Dict[str, Any]]:
        """sweep_summary.csv 的行"""
        rows = []
        for key in sorted(self.reports, key=lambda key: (key[1], key[0])):
            report = self.reports[key]
            rows.append({
                "budget": key[1], "mode": key[0], "LB": report.lower_bound, "UB": report.upper_bound,
                "gap_pct": report.gap_pct, "elapsed_s": self.elapsed.get(key),
            })
        return rows


def run_sweep(scenario: Scenario, budgets: Sequence[float], config: SolverConfig, out_dir: Path,
              modes: Sequence[str] = SWEEP_MODES, workers: Optional[int] = None) -> SweepResult:
    """
    预算扫描

    对每个总预算（按场景的阶段比例分配）先求仅充电站方案，再求联合方案。
    后者以同预算的仅充电站解和上一预算的联合解热启动，前者以上一预算的解热启动，
    因此下界随预算单调且联合方案不劣于仅充电站方案。

    Args:
        scenario: 基准场景
        budgets: 递增的总预算
        config: 求解器配置
        out_dir: 输出目录
        modes: 参与扫描的模式
        workers: 并行进程数

    Returns:
        SweepResult
    """
    budgets = check_budgets(budgets)
    modes = [mode for mode in SWEEP_MODES if mode in modes]
    if not modes:
        raise ScenarioValidationError("mode", f"模式必须属于 {SWEEP_MODES}")
    result = SweepResult(budgets=budgets)
    swap_table = None
    if "joint" in modes:
        swap_table = get_swap_table(scenario.swap_spec, scenario.charge_spec.tau_c,
                                    config.optimizer.swap_load_factor)

    previous: Dict[str, OptimalityReport] = {}
    for budget in budgets:
        scaled = scenario.with_total_budget(budget)
        for mode in modes:
            warm = []
            if mode == "joint" and ("charging_only", budget) in result.reports:
                warm.append(result.reports[("charging_only", budget)].lower)
            if mode in previous:
                warm.append(previous[mode].lower)
            app_logger.info(f"预算扫描: 预算={budget:g}, 模式={mode}, 热启动={len(warm)}")
            started = time.perf_counter()
            report = certify(scaled, config, mode=mode, warm_starts=warm,
                             swap_table=swap_table if mode == "joint" else None, workers=workers)
            result.reports[(mode, budget)] = report
            result.elapsed[(mode, budget)] = time.perf_counter() - started
            app_logger.info(f"预算 {budget:g}（{mode}）: LB={report.lower_bound:.6g} UB={report.upper_bound:.6g} "
                            f"间隙={report.gap_pct:.3f}% 耗时 {result.elapsed[(mode, budget)]:.1f} 秒")
            previous[mode] = report
        if len(modes) == 2:
            result.deltas.append(comparison_deltas(result.reports[("joint", budget)],
                                                   result.reports[("charging_only", budget)]))

    meta = metadata(scenario, config.optimizer.seed,
                    {"command": "sweep", "budgets": budgets, "modes": modes})
    reports = result.ordered()
    _write_report_tables(out_dir, reports, meta)
    write_csv(out_dir / "comparison.csv", [r.summary_row() for r in reports], COMPARISON_COLUMNS, meta)
    if result.deltas:
        write_csv(out_dir / "comparison_deltas.csv", result.deltas, DELTA_COLUMNS, meta)
    # 含耗时，不参与逐字节一致性比较
    write_csv(out_dir / "sweep_summary.csv", result.summary_rows(), SUMMARY_COLUMNS, meta)
    return result


def run_priority(scenario: Scenario, budgets: Sequence[float], config: SolverConfig, out_dir: Path,
                 workers: Optional[int] = None) -> List[Dict[str, Any]]:
    """
    部署优先级实验：低需求区（区域 0）与高需求区（区域 1）各取一种设施策略，共 9 种组合

    不可行的组合记为 status=infeasible，不中断实验。

    Returns:
        priority.csv 的行
    """
    if scenario.M != 2:
        raise ScenarioValidationError("M", "部署优先级实验需要两区域场景")
    budgets = check_budgets(budgets)
    swap_table = get_swap_table(scenario.swap_spec, scenario.charge_spec.tau_c,
                                config.optimizer.swap_load_factor)
    rows: List[Dict[str, Any]] = []
    frontier: List[Dict[str, Any]] = []
    for budget in budgets:
        scaled = scenario.with_total_budget(budget)
        best = None
        for low in POLICIES:
            for high in POLICIES:
                row = {"budget": budget, "low_policy": low, "high_policy": high,
                       "status": "ok", "profit": None, "rho_ev": None}
                try:
                    solution = solve_original(scaled, config, policy=(low, high),
                                              swap_table=swap_table, workers=workers)
                    row["profit"] = solution.lower_bound
                    row["rho_ev"] = solution.long_run_utilization
                except InfeasibleError as e:
                    app_logger.warning(f"策略组合 ({low}, {high}) 在预算 {budget:g} 下不可行: {str(e)}")
                    row["status"] = "infeasible"
                rows.append(row)
                if row["status"] == "ok" and (best is None or row["profit"] > best["profit"]):
                    best = row
        if best is not None:
            frontier.append({key: best[key] for key in FRONTIER_COLUMNS})
        app_logger.info(f"预算 {budget:g} 的最优组合: 低需求区 {best['low_policy']}, 高需求区 {best['high_policy']}"
                        if best else f"预算 {budget:g} 下所有组合均不可行")

    meta = metadata(scenario, config.optimizer.seed, {"command": "priority", "budgets": budgets})
    write_csv(out_dir / "priority.csv", rows, PRIORITY_COLUMNS, meta)
    write_csv(out_dir / "priority_frontier.csv", frontier, FRONTIER_COLUMNS, meta)
    return rows


@dataclass
class QueueValidation:
    """排队模型校验结果"""
    charging: List[ProbeRow]
    swapping: List[ProbeRow]
    des_rows: List[Dict[str, Any]] = field(default_factory=list)

    @property
    def flags(self) -> Dict[str, Dict[str, int]]:
        return {"charging": probe_flags(self.charging), "swapping": probe_flags(self.swapping)}

    @property
    def des_mismatches(self) -> int:
        return sum(1 for row in self.des_rows if not row["ok"])

    @property
    def ok(self) -> bool:
        shape_flags = sum(flags["convex_flags"] + flags["monotone_flags"] for flags in self.flags.values())
        return shape_flags == 0 and self.des_mismatches == 0


def _check_points(rows: Sequence[ProbeRow]) -> List[ProbeRow]:
    """取首个、中位与末个稳定点做仿真对照"""
    stable = [row for row in rows if row.stable]
    if not stable:
        return []
    picks = {0, len(stable) // 2, len(stable) - 1}
    return [stable[idx] for idx in sorted(picks)]


def _des_checks(charge_spec: ChargeStationSpec, swap_spec: SwapStationSpec, validation: QueueValidation,
                n_arrivals: int, seed: int) -> List[Dict[str, Any]]:
    rows = []
    for row in _check_points(validation.charging):
        try:
            analytic = erlang_c_wait(row.arrival_rate, charge_spec).wait
        except UnstableQueueError:
            continue
        sim = des_mmV(row.arrival_rate, charge_spec, n_arrivals=n_arrivals, seed=seed)
        tolerance = max(CHARGE_REL_TOL * analytic, WAIT_ABS_TOL)
        rows.append({
            "queue": "charging", "x": row.x, "arrival_rate": row.arrival_rate,
            "analytic_wait": analytic, "sim_wait": sim.mean_wait, "wait_ci": sim.ci_halfwidth,
            "analytic_block": 0.0, "sim_block": 0.0, "block_ci": 0.0, "tolerance": tolerance,
            "ok": abs(sim.mean_wait - analytic) <= tolerance,
        })
    for row in _check_points(validation.swapping):
        analytic = swap_metrics(row.arrival_rate, swap_spec, charge_spec.tau_c)
        sim = des_swap(row.arrival_rate, swap_spec, charge_spec.tau_c, n_arrivals=n_arrivals, seed=seed)
        tolerance = max(SWAP_REL_TOL * analytic.wait, WAIT_ABS_TOL)
        rows.append({
            "queue": "swapping", "x": row.x, "arrival_rate": row.arrival_rate,
            "analytic_wait": analytic.wait, "sim_wait": sim.mean_wait, "wait_ci": sim.ci_halfwidth,
            "analytic_block": analytic.block, "sim_block": sim.block_rate, "block_ci": sim.block_ci,
            "tolerance": tolerance,
            "ok": abs(sim.mean_wait - analytic.wait) <= tolerance
            and abs(sim.block_rate - analytic.block) <= BLOCK_TOL,
        })
    for row in rows:
        if not row["ok"]:
            app_logger.warning(
                f"仿真对照不一致: {row['queue']} x={row['x']:g}, 解析={row['analytic_wait']:.6g}, "
                f"仿真={row['sim_wait']:.6g}"
            )
    return rows


def validate_queues(charge_spec: ChargeStationSpec, swap_spec: SwapStationSpec, out_dir: Path,
                    seed: int = 0, k_fixed: float = PROBE_K, x_range: Sequence[float] = PROBE_X,
                    des: bool = True, n_arrivals: int = DES_ARRIVALS) -> QueueValidation:
    """
    排队模型校验：两类队列的凸性探针及仿真对照

    不稳定点逐行报告，不视为失败。写出 queue_probe_charging.csv、queue_probe_swapping.csv
    以及（启用仿真时）queue_des_check.csv。

    Args:
        charge_spec: 充电站规格
        swap_spec: 换电站规格
        out_dir: 输出目录
        seed: 仿真随机种子
        k_fixed: 区域充电需求（辆/小时）
        x_range: 设施数量
        des: 是否做仿真对照
        n_arrivals: 每次仿真的到达数量

    Returns:
        QueueValidation
    """
    validation = QueueValidation(
        charging=convexity_probe("charging", k_fixed, x_range, charge_spec, swap_spec),
        swapping=convexity_probe("swapping", k_fixed, x_range, charge_spec, swap_spec),
    )
    if des:
        validation.des_rows = _des_checks(charge_spec, swap_spec, validation, n_arrivals, seed)

    meta = metadata(seed=seed, extra={
        "command": "validate-queues", "k_fixed": k_fixed,
        "charge_spec": charge_spec.to_dict(), "swap_spec": swap_spec.to_dict(),
    })
    write_csv(out_dir / "queue_probe_charging.csv", [row.to_dict() for row in validation.charging],
              PROBE_COLUMNS, meta)
    write_csv(out_dir / "queue_probe_swapping.csv", [row.to_dict() for row in validation.swapping],
              PROBE_COLUMNS, meta)
    if des:
        write_csv(out_dir / "queue_des_check.csv", validation.des_rows, DES_COLUMNS, meta)

    unstable = validation.flags["charging"]["unstable_points"]
    if unstable:
        app_logger.warning(f"充电站探针有 {unstable} 个不稳定点（ρ ≥ 1），已逐行报告")
    app_logger.info(f"排队模型校验: 告警={validation.flags}, 仿真不一致={validation.des_mismatches}")
    return validation

