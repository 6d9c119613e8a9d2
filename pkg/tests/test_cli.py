"""
命令行测试
"""
import csv
import json

import pytest
import yaml

from src.cli.experiments import validate_queues
from src.cli.main import EXIT_INFEASIBLE, EXIT_INPUT, EXIT_OK, main
from tests.conftest import SCENARIO_DIR

SMOKE = str(SCENARIO_DIR / "smoke_2zone.json")


def _read_csv(path):
    with open(path, "r", encoding="utf-8") as f:
        return list(csv.DictReader(f))


class TestSolveCommand:
    """solve 子命令测试"""

    def test_solve_writes_artifacts(self, tmp_path, fast_config_file, capsys):
        """测试求解后写出结果文件并打印摘要"""
        out = tmp_path / "solve"
        code = main(["solve", "--scenario", SMOKE, "--config", str(fast_config_file), "--out", str(out)])
        assert code == EXIT_OK
        for name in ("solution.json", "bounds.csv", "deployment.csv", "traces.csv"):
            assert (out / name).exists(), name
        assert (out / "bounds.csv.meta.json").exists()

        bounds = _read_csv(out / "bounds.csv")
        assert len(bounds) == 1
        assert float(bounds[0]["UB"]) >= float(bounds[0]["LB"]) - 1e-6 * abs(float(bounds[0]["LB"]))
        with open(out / "solution.json", "r", encoding="utf-8") as f:
            solution = json.load(f)
        assert solution["solution"]["audit"]["passed"] is True
        assert solution["metadata"]["scenario_hash"]
        assert "solve:" in capsys.readouterr().out

    def test_repeated_runs_identical(self, tmp_path, fast_config_file):
        """测试相同输入与种子两次求解的 solution.json 与 bounds.csv 逐字节一致"""
        outputs = []
        for name in ("first", "second"):
            out = tmp_path / name
            code = main(["solve", "--scenario", SMOKE, "--config", str(fast_config_file), "--out", str(out)])
            assert code == EXIT_OK
            outputs.append(out)
        for name in ("solution.json", "bounds.csv"):
            assert (outputs[0] / name).read_bytes() == (outputs[1] / name).read_bytes(), name

    def test_malformed_json(self, tmp_path, capsys):
        """测试场景文件 JSON 格式错误时报告行列并返回 1"""
        path = tmp_path / "broken.json"
        path.write_text('{\n  "M": 2,\n  "T": \n}', encoding="utf-8")
        code = main(["solve", "--scenario", str(path), "--out", str(tmp_path)])
        assert code == EXIT_INPUT
        assert "JSON 解析失败" in capsys.readouterr().err

    def test_missing_scenario(self, tmp_path):
        """测试场景文件不存在"""
        code = main(["solve", "--scenario", str(tmp_path / "nowhere.json"), "--out", str(tmp_path)])
        assert code == EXIT_INPUT

    def test_invalid_scenario(self, tmp_path, smoke_document, capsys):
        """测试场景校验失败时返回 1 并指出字段"""
        smoke_document["phi"] = -1.0
        path = tmp_path / "bad.json"
        path.write_text(json.dumps(smoke_document), encoding="utf-8")
        assert main(["solve", "--scenario", str(path), "--out", str(tmp_path)]) == EXIT_INPUT
        assert "phi" in capsys.readouterr().err

    def test_infeasible(self, tmp_path, fast_config, capsys):
        """测试强制部署电动车但预算为 0 时返回 2"""
        config = fast_config.model_copy(update={
            "optimizer": fast_config.optimizer.model_copy(update={"ev_mandatory": True}),
        })
        path = tmp_path / "mandatory.yaml"
        path.write_text(yaml.safe_dump(config.model_dump()), encoding="utf-8")
        code = main(["solve", "--scenario", SMOKE, "--config", str(path), "--budgets", "0",
                     "--out", str(tmp_path)])
        assert code == EXIT_INFEASIBLE
        assert "不可行" in capsys.readouterr().err

    def test_missing_config(self, tmp_path):
        """测试配置文件不存在"""
        code = main(["solve", "--scenario", SMOKE, "--config", str(tmp_path / "none.yaml"),
                     "--out", str(tmp_path)])
        assert code == EXIT_INPUT


class TestExperimentCommands:
    """扫描、优先级与排队校验子命令测试"""

    def test_sweep_rejects_unordered_budgets(self, tmp_path, fast_config_file):
        """测试预算必须严格递增"""
        code = main(["sweep", "--scenario", SMOKE, "--budgets", "4", "2", "--config", str(fast_config_file),
                     "--out", str(tmp_path)])
        assert code == EXIT_INPUT

    def test_priority_requires_two_zones(self, tmp_path, fast_config_file):
        """测试优先级实验只接受两区域场景"""
        code = main(["priority", "--scenario", str(SCENARIO_DIR / "manhattan6.json"),
                     "--config", str(fast_config_file), "--out", str(tmp_path)])
        assert code == EXIT_INPUT

    def test_validate_queues_without_simulation(self, tmp_path, capsys):
        """测试只做凸性探针"""
        code = main(["validate-queues", "--spec", SMOKE, "--no-des", "--out", str(tmp_path)])
        assert code == EXIT_OK
        rows = _read_csv(tmp_path / "queue_probe_charging.csv")
        assert len(rows) == 20
        assert (tmp_path / "queue_probe_swapping.csv").exists()
        assert not (tmp_path / "queue_des_check.csv").exists()
        assert "validate-queues:" in capsys.readouterr().out

    def test_des_tolerances_fixed(self, tmp_path, charge_spec, swap_spec):
        """测试仿真对照使用固定容差，不随置信区间放宽"""
        validation = validate_queues(charge_spec, swap_spec, tmp_path, seed=0, n_arrivals=100_000)
        assert {row["queue"] for row in validation.des_rows} == {"charging", "swapping"}
        for row in validation.des_rows:
            rel = 0.03 if row["queue"] == "charging" else 0.05
            assert row["tolerance"] == pytest.approx(max(rel * row["analytic_wait"], 0.05 / 60.0))

    def test_ingest_trips(self, tmp_path):
        """测试行程导入写出场景片段"""
        trips = tmp_path / "trips.csv"
        trips.write_text(
            "pickup_zone,dropoff_zone,duration_minutes\n"
            "1,1,6\n1,2,12\n2,1,12\n2,2,6\n1,2,18\n",
            encoding="utf-8",
        )
        zones = tmp_path / "zones.json"
        zones.write_text(json.dumps({"1": 1, "2": 2}), encoding="utf-8")
        fragment = tmp_path / "fragment.json"
        code = main(["ingest-trips", "--trips", str(trips), "--zone-map", str(zones), "--hours", "2",
                     "--fragment", str(fragment)])
        assert code == EXIT_OK
        with open(fragment, "r", encoding="utf-8") as f:
            payload = json.load(f)
        assert payload["base_demand"] == [[0.5, 1.0], [0.5, 0.5]]
        assert payload["trip_time"][0][1] == pytest.approx(0.25)

    def test_ingest_missing_trips(self, tmp_path):
        """测试行程文件不存在"""
        zones = tmp_path / "zones.json"
        zones.write_text(json.dumps({"1": 1, "2": 2}), encoding="utf-8")
        code = main(["ingest-trips", "--trips", str(tmp_path / "none.csv"), "--zone-map", str(zones),
                     "--hours", "1", "--out", str(tmp_path)])
        assert code == EXIT_INPUT

    @pytest.mark.slow
    def test_validate_queues_with_simulation(self, tmp_path):
        """测试凸性探针与仿真对照全部通过"""
        code = main(["validate-queues", "--spec", SMOKE, "--out", str(tmp_path)])
        assert code == EXIT_OK
        rows = _read_csv(tmp_path / "queue_des_check.csv")
        assert rows and all(row["ok"] == "True" for row in rows)

    @pytest.mark.slow
    def test_priority_smoke(self, tmp_path, fast_config_file):
        """测试两区域九种组合"""
        code = main(["priority", "--scenario", str(SCENARIO_DIR / "priority_2zone.json"),
                     "--config", str(fast_config_file), "--out", str(tmp_path)])
        assert code == EXIT_OK
        rows = _read_csv(tmp_path / "priority.csv")
        assert len(rows) % 9 == 0
        assert (tmp_path / "priority_frontier.csv").exists()

    @pytest.mark.slow
    def test_sweep_smoke(self, tmp_path, fast_config_file):
        """测试预算扫描：下界随预算不减，联合部署不劣于仅充电站"""
        code = main(["sweep", "--scenario", SMOKE, "--budgets", "2", "4", "--config", str(fast_config_file),
                     "--out", str(tmp_path)])
        assert code == EXIT_OK
        bounds = _read_csv(tmp_path / "bounds.csv")
        by_key = {(row["mode"], float(row["budget"])): float(row["LB"]) for row in bounds}
        for mode in ("joint", "charging_only"):
            assert by_key[(mode, 4.0)] >= by_key[(mode, 2.0)] - 1e-6 * abs(by_key[(mode, 2.0)])
        for budget in (2.0, 4.0):
            assert by_key[("joint", budget)] >= by_key[("charging_only", budget)] - 1e-6 * abs(by_key[("joint", budget)])
        assert (tmp_path / "comparison.csv").exists()
        assert (tmp_path / "comparison_deltas.csv").exists()
        summary = _read_csv(tmp_path / "sweep_summary.csv")
        assert len(summary) == 4
        assert all(float(row["elapsed_s"]) > 0 for row in summary)
