"""
六区域场景的预算扫描验收测试（运行时间较长，全部带 slow 标记）
"""
import pytest

from src.cli.experiments import run_sweep
from src.config.solver_config import load_solver_config
from src.model.scenario import load_scenario
from tests.conftest import SCENARIO_DIR

BUDGETS = (40.0, 60.0, 80.0, 100.0, 120.0)
MAX_GAP_PCT = 6.0


@pytest.fixture(scope="module")
def sweep(tmp_path_factory):
    """manhattan6 在五个总预算下的两种模式扫描，整个模块只跑一次"""
    scenario = load_scenario(SCENARIO_DIR / "manhattan6.json")
    return run_sweep(scenario, BUDGETS, load_solver_config(), tmp_path_factory.mktemp("sweep"))


@pytest.mark.slow
class TestManhattanSweep:
    """六区域、四阶段实例"""

    def test_upper_bound_valid(self, sweep):
        """测试每个预算 UB ≥ LB"""
        for report in sweep.reports.values():
            assert report.upper_bound >= report.lower_bound - 1e-9 * abs(report.lower_bound)

    def test_gap_within_target(self, sweep):
        """测试联合部署在每个预算下间隙不超过 6%"""
        for budget in BUDGETS:
            report = sweep.reports[("joint", budget)]
            assert report.gap_pct <= MAX_GAP_PCT, budget

    def test_joint_dominates_charging_only(self, sweep):
        """测试联合部署的总利润不低于仅充电站，最大预算下长期利润严格更高"""
        for budget in BUDGETS:
            joint = sweep.reports[("joint", budget)].lower
            charging = sweep.reports[("charging_only", budget)].lower
            assert joint.lower_bound >= charging.lower_bound - 1e-9 * abs(charging.lower_bound)
        largest = BUDGETS[-1]
        joint = sweep.reports[("joint", largest)].lower
        charging = sweep.reports[("charging_only", largest)].lower
        assert joint.long_run_profit > charging.long_run_profit

    def test_lower_bound_monotone_in_budget(self, sweep):
        """测试下界随预算不减"""
        for mode in ("joint", "charging_only"):
            values = [sweep.reports[(mode, budget)].lower_bound for budget in BUDGETS]
            for small, large in zip(values, values[1:]):
                assert large >= small - 1e-9 * abs(small)

    def test_charging_only_utilization_asymptote(self, sweep):
        """测试仅充电站方案的长期利用率不超过 ℛ/(ℛ+τ_c)"""
        scenario = load_scenario(SCENARIO_DIR / "manhattan6.json")
        limit = scenario.battery_range_hours / (scenario.battery_range_hours + scenario.charge_spec.tau_c)
        for budget in BUDGETS:
            assert sweep.reports[("charging_only", budget)].lower.long_run_utilization <= limit + 1e-9

    def test_summary_records_timing(self, sweep):
        """测试扫描汇总逐点记录耗时"""
        rows = sweep.summary_rows()
        assert len(rows) == 2 * len(BUDGETS)
        assert all(row["elapsed_s"] is not None and row["elapsed_s"] > 0 for row in rows)
