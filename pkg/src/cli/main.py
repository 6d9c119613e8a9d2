"""
命令行入口

    python -m src.cli solve --scenario data/scenarios/manhattan6.json --out output/solve
    python -m src.cli sweep --scenario data/scenarios/manhattan6.json --budgets 40 60 80 100 120
    python -m src.cli ingest-trips --trips trips.csv --zone-map zones.json --hours 24
    python -m src.cli validate-queues --spec data/scenarios/manhattan6.json
    python -m src.cli priority --scenario data/scenarios/priority_2zone.json --budgets 2 4 6

退出码：0 成功，1 输入错误，2 不可行或排队模型校验未通过。
"""
import argparse
import json
import sys
from pathlib import Path
from typing import Any, Callable, List, Optional

from src.cli.artifacts import write_json
from src.cli.experiments import DES_ARRIVALS, SWEEP_MODES, run_priority, run_solve, run_sweep, validate_queues
from src.cli.ingest import ingest_trips, load_zone_map
from src.config import settings
from src.config.solver_config import SolverConfig, load_solver_config
from src.model.exceptions import ChargenetError, InfeasibleError, ScenarioValidationError
from src.model.scenario import Scenario, load_scenario, load_station_specs
from src.utils import app_logger

EXIT_OK = 0
EXIT_INPUT = 1
EXIT_INFEASIBLE = 2

DEFAULT_SWEEP = [40.0, 60.0, 80.0, 100.0, 120.0]


def _load_input(loader: Callable[[Path], Any], path: str) -> Any:
    """读取输入文件，JSON 解析错误带上行列位置"""
    try:
        return loader(Path(path))
    except json.JSONDecodeError as e:
        raise ScenarioValidationError(path, f"JSON 解析失败（第 {e.lineno} 行第 {e.colno} 列）: {e.msg}") from e
    except FileNotFoundError as e:
        raise ScenarioValidationError(path, "文件不存在") from e


def _config(args: argparse.Namespace) -> SolverConfig:
    path = None
    if args.config:
        path = Path(args.config)
        if not path.exists():
            raise ScenarioValidationError(args.config, "配置文件不存在")
    return load_solver_config(path).with_overrides(seed=args.seed, workers=args.workers)


def _out_dir(args: argparse.Namespace) -> Path:
    return Path(args.out) if args.out else settings.resolve_path(settings.output_dir)


def _scenario(args: argparse.Namespace) -> Scenario:
    return _load_input(load_scenario, args.scenario)


def cmd_solve(args: argparse.Namespace) -> int:
    scenario = _scenario(args)
    config = _config(args)
    if args.budgets:
        if len(args.budgets) != 1:
            raise ScenarioValidationError("budgets", "solve 只接受一个总预算")
        scenario = scenario.with_total_budget(args.budgets[0])
    out_dir = _out_dir(args)
    report = run_solve(scenario, config, out_dir, mode=args.mode or "joint", workers=args.workers)
    print(f"solve: 场景={scenario.name} 模式={report.mode} LB={report.lower_bound:.6g} "
          f"UB={report.upper_bound:.6g} 间隙={report.gap_pct:.3f}% 输出={out_dir}")
    return EXIT_OK


def cmd_sweep(args: argparse.Namespace) -> int:
    scenario = _scenario(args)
    config = _config(args)
    modes = SWEEP_MODES if args.mode in (None, "both") else (args.mode,)
    out_dir = _out_dir(args)
    result = run_sweep(scenario, args.budgets or DEFAULT_SWEEP, config, out_dir, modes=modes,
                       workers=args.workers)
    worst = max(report.gap_pct for report in result.reports.values())
    print(f"sweep: 场景={scenario.name} 预算数={len(result.budgets)} 模式={','.join(modes)} "
          f"最大间隙={worst:.3f}% 输出={out_dir}")
    return EXIT_OK


def cmd_ingest_trips(args: argparse.Namespace) -> int:
    zone_map = _load_input(load_zone_map, args.zone_map)
    if not Path(args.trips).exists():
        raise ScenarioValidationError(args.trips, "文件不存在")
    result = ingest_trips(args.trips, zone_map, hours=args.hours)
    target = Path(args.fragment) if args.fragment else _out_dir(args) / "scenario_fragment.json"
    write_json(target, result.to_fragment())
    print(f"ingest-trips: 行程={result.n_trips} 区域={result.M} 未映射={result.unmapped} "
          f"时长非正={result.zero_duration} 输出={target}")
    return EXIT_OK


def cmd_validate_queues(args: argparse.Namespace) -> int:
    charge_spec, swap_spec = _load_input(load_station_specs, args.spec)
    out_dir = _out_dir(args)
    validation = validate_queues(charge_spec, swap_spec, out_dir, seed=args.seed or 0,
                                 des=not args.no_des, n_arrivals=args.des_arrivals)
    flags = validation.flags
    print(f"validate-queues: 充电={flags['charging']} 换电={flags['swapping']} "
          f"仿真不一致={validation.des_mismatches} 输出={out_dir}")
    if not validation.ok:
        app_logger.error("排队模型校验未通过")
        return EXIT_INFEASIBLE
    return EXIT_OK


def cmd_priority(args: argparse.Namespace) -> int:
    scenario = _scenario(args)
    config = _config(args)
    budgets = args.budgets or [scenario.total_budget]
    out_dir = _out_dir(args)
    rows = run_priority(scenario, budgets, config, out_dir, workers=args.workers)
    infeasible = sum(1 for row in rows if row["status"] != "ok")
    print(f"priority: 场景={scenario.name} 组合数={len(rows)} 不可行={infeasible} 输出={out_dir}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    """构造命令行解析器"""
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="求解器配置 YAML（缺省读取 CHARGENET_SOLVER_CONFIG）")
    common.add_argument("--out", help="输出目录（缺省读取 CHARGENET_OUTPUT_DIR）")
    common.add_argument("--seed", type=int, help="随机种子")
    common.add_argument("--workers", type=int, help="并行进程数（缺省读取 CHARGENET_WORKERS）")

    parser = argparse.ArgumentParser(
        prog="chargenet",
        description="网约车电动化的充电站与换电站多阶段联合规划",
    )
    commands = parser.add_subparsers(dest="command", required=True)

    solve = commands.add_parser("solve", parents=[common], help="求解单个场景并给出上下界")
    solve.add_argument("--scenario", required=True, help="场景 JSON")
    solve.add_argument("--mode", choices=("joint", "charging_only"), default="joint")
    solve.add_argument("--budgets", type=float, nargs="+", help="覆盖场景总预算（按阶段比例分配）")
    solve.set_defaults(handler=cmd_solve)

    sweep = commands.add_parser("sweep", parents=[common], help="预算扫描与两种部署模式对比")
    sweep.add_argument("--scenario", required=True, help="场景 JSON")
    sweep.add_argument("--budgets", type=float, nargs="+", help="递增的总预算，缺省 40 60 80 100 120")
    sweep.add_argument("--mode", choices=("joint", "charging_only", "both"), default="both")
    sweep.set_defaults(handler=cmd_sweep)

    ingest = commands.add_parser("ingest-trips", parents=[common], help="由行程记录估计需求与行程时间")
    ingest.add_argument("--trips", required=True, help="行程 CSV（pickup_zone, dropoff_zone, duration_minutes）")
    ingest.add_argument("--zone-map", required=True, help="区域映射（JSON 或 CSV）")
    ingest.add_argument("--hours", type=float, help="数据覆盖的小时数，缺省由 pickup_datetime 推断")
    ingest.add_argument("--fragment", help="场景片段输出路径，缺省为 <out>/scenario_fragment.json")
    ingest.set_defaults(handler=cmd_ingest_trips)

    queues = commands.add_parser("validate-queues", parents=[common], help="排队模型凸性探针与仿真对照")
    queues.add_argument("--spec", "--scenario", dest="spec", required=True,
                        help="含 charge_spec 与 swap_spec 的 JSON（可直接使用场景文件）")
    queues.add_argument("--des-arrivals", type=int, default=DES_ARRIVALS, help="每次仿真的到达数量")
    queues.add_argument("--no-des", action="store_true", help="只做凸性探针，跳过仿真对照")
    queues.set_defaults(handler=cmd_validate_queues)

    priority = commands.add_parser("priority", parents=[common], help="两区域部署优先级实验")
    priority.add_argument("--scenario", required=True, help="两区域场景 JSON")
    priority.add_argument("--budgets", type=float, nargs="+", help="递增的总预算，缺省为场景预算")
    priority.set_defaults(handler=cmd_priority)

    return parser


def main(argv: Optional[List[str]] = None) -> int:
    """
    解析参数并执行子命令

    Returns:
        退出码
    """
    args = build_parser().parse_args(argv)
    try:
        return args.handler(args)
    except InfeasibleError as e:
        app_logger.error(f"{args.command} 失败（不可行）: {str(e)}")
        print(f"不可行: {e}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (ChargenetError, ValueError, OSError) as e:
        app_logger.error(f"{args.command} 失败: {str(e)}")
        print(f"输入错误: {e}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
