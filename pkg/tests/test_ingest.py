"""
行程记录导入测试
"""
import json

import numpy as np
import pandas as pd
import pytest

from src.cli.ingest import ingest_trips, load_zone_map, validate_zone_map
from src.model.exceptions import ScenarioValidationError

ZONE_MAP = {"101": 1, "102": 1, "200": 2}


def _trips() -> pd.DataFrame:
    """已知计数的合成数据：10 小时内 0→0 有 20 条、0→1 有 40 条、1→0 有 30 条、1→1 有 10 条"""
    rows = []
    rows += [("101", "102", 9.0)] * 10 + [("102", "101", 9.0)] * 10
    rows += [("101", "200", 18.0)] * 20 + [("102", "200", 24.0)] * 20
    rows += [("200", "101", 18.0)] * 30
    rows += [("200", "200", 6.0)] * 10
    return pd.DataFrame(rows, columns=["pickup_zone", "dropoff_zone", "duration_minutes"])


class TestIngestTrips:
    """需求与行程时间估计测试"""

    def test_exact_recovery(self):
        """测试计数与平均时长的精确恢复"""
        result = ingest_trips(_trips(), ZONE_MAP, hours=10.0)
        np.testing.assert_allclose(result.base_demand, [[2.0, 4.0], [3.0, 1.0]])
        np.testing.assert_allclose(result.trip_time, [[0.15, 0.35], [0.3, 0.1]])
        assert result.n_trips == 100
        assert result.zones == ["101", "200"]
        assert result.filled_pairs == 0
        assert result.warnings == []

    def test_unmapped_zone_counted(self):
        """测试映射之外的区域被剔除并告警"""
        trips = pd.concat([_trips(), pd.DataFrame(
            [("999", "101", 5.0)], columns=["pickup_zone", "dropoff_zone", "duration_minutes"],
        )])
        result = ingest_trips(trips, ZONE_MAP, hours=10.0)
        assert result.unmapped == 1
        assert result.n_trips == 100
        assert "999" in result.warnings[0]

    def test_non_positive_duration_dropped(self):
        """测试时长非正或无法解析的记录被剔除"""
        trips = pd.concat([_trips(), pd.DataFrame(
            [("101", "200", 0.0), ("101", "200", "n/a")],
            columns=["pickup_zone", "dropoff_zone", "duration_minutes"],
        )])
        result = ingest_trips(trips, ZONE_MAP, hours=10.0)
        assert result.zero_duration == 2
        np.testing.assert_allclose(result.base_demand[0, 1], 4.0)

    def test_missing_pair_filled(self):
        """测试没有记录的区域对由反向均值补齐"""
        trips = _trips()
        trips = trips[~((trips["pickup_zone"] == "200") & (trips["dropoff_zone"] == "101"))]
        result = ingest_trips(trips, ZONE_MAP, hours=10.0)
        assert result.filled_pairs == 1
        assert result.base_demand[1, 0] == 0.0
        assert result.trip_time[1, 0] == pytest.approx(result.trip_time[0, 1])

    def test_hours_inferred_from_timestamps(self):
        """测试由 pickup_datetime 推断时间跨度"""
        trips = _trips()
        stamps = pd.date_range("2024-03-01 00:00", "2024-03-01 10:00", periods=len(trips))
        trips = trips.assign(pickup_datetime=stamps.astype(str))
        result = ingest_trips(trips, ZONE_MAP)
        assert result.hours == pytest.approx(10.0)
        np.testing.assert_allclose(result.base_demand, [[2.0, 4.0], [3.0, 1.0]])

    def test_hours_required(self):
        """测试缺少时间跨度"""
        with pytest.raises(ScenarioValidationError) as exc_info:
            ingest_trips(_trips(), ZONE_MAP)
        assert exc_info.value.field == "hours"

    def test_missing_column(self):
        """测试缺少必需列"""
        with pytest.raises(ScenarioValidationError) as exc_info:
            ingest_trips(_trips().drop(columns=["duration_minutes"]), ZONE_MAP, hours=1.0)
        assert exc_info.value.field == "trips.duration_minutes"

    def test_empty_file(self, tmp_path):
        """测试空文件与只有表头的文件"""
        empty = tmp_path / "empty.csv"
        empty.write_text("", encoding="utf-8")
        with pytest.raises(ScenarioValidationError):
            ingest_trips(empty, ZONE_MAP, hours=1.0)

        header = tmp_path / "header.csv"
        header.write_text("pickup_zone,dropoff_zone,duration_minutes\n", encoding="utf-8")
        with pytest.raises(ScenarioValidationError):
            ingest_trips(header, ZONE_MAP, hours=1.0)

    def test_fragment(self):
        """测试场景片段"""
        fragment = ingest_trips(_trips(), ZONE_MAP, hours=10.0).to_fragment()
        assert fragment["M"] == 2
        assert fragment["ingest"]["n_trips"] == 100
        json.dumps(fragment)


class TestZoneMap:
    """区域映射测试"""

    def test_json_and_csv(self, tmp_path):
        """测试两种文件格式"""
        json_path = tmp_path / "zones.json"
        json_path.write_text(json.dumps(ZONE_MAP), encoding="utf-8")
        csv_path = tmp_path / "zones.csv"
        csv_path.write_text("raw_zone,zone\n101,1\n102,1\n200,2\n", encoding="utf-8")
        assert load_zone_map(json_path) == ZONE_MAP
        assert load_zone_map(csv_path) == ZONE_MAP

    def test_targets_must_be_contiguous(self):
        """测试目标编号不连续"""
        with pytest.raises(ScenarioValidationError):
            validate_zone_map({"a": 1, "b": 3})

    def test_single_target_rejected(self):
        """测试只有一个目标区域"""
        with pytest.raises(ScenarioValidationError):
            validate_zone_map({"a": 1, "b": 1})

    def test_csv_columns(self, tmp_path):
        """测试 CSV 缺少列"""
        path = tmp_path / "zones.csv"
        path.write_text("id,target\n1,1\n2,2\n", encoding="utf-8")
        with pytest.raises(ScenarioValidationError):
            load_zone_map(path)
