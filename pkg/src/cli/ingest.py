"""
行程记录导入

由含 pickup_zone、dropoff_zone、duration_minutes 三列的行程 CSV 估计潜在需求 λ̄（次/小时）
和平均行程时间 τ（小时），输出场景片段。
"""
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Union

import numpy as np
import pandas as pd

from src.model.exceptions import ScenarioValidationError
from src.utils import app_logger

REQUIRED_COLUMNS = ("pickup_zone", "dropoff_zone", "duration_minutes")
TIME_COLUMN = "pickup_datetime"


@dataclass
class IngestResult:
    """导入结果"""
    base_demand: np.ndarray
    trip_time: np.ndarray
    zones: List[str]
    n_trips: int
    hours: float
    unmapped: int = 0
    zero_duration: int = 0
    filled_pairs: int = 0
    warnings: List[str] = field(default_factory=list)

    @property
    def M(self) -> int:
        return self.base_demand.shape[0]

    def to_fragment(self) -> Dict[str, Any]:
        """可合并进场景文件的片段"""
        return {
            "M": self.M,
            "base_demand": self.base_demand.tolist(),
            "trip_time": self.trip_time.tolist(),
            "ingest": {
                "zones": self.zones,
                "n_trips": self.n_trips,
                "hours": self.hours,
                "unmapped": self.unmapped,
                "zero_duration": self.zero_duration,
                "filled_pairs": self.filled_pairs,
                "warnings": self.warnings,
            },
        }


def load_zone_map(path: Union[str, Path]) -> Dict[str, int]:
    """
    读取区域映射：原始区域编号 → 1..M

    支持 JSON 对象，或含 raw_zone、zone 两列的 CSV。
    """
    path = Path(path)
    if path.suffix.lower() == ".json":
        with open(path, "r", encoding="utf-8") as f:
            raw = json.load(f)
        if not isinstance(raw, dict):
            raise ScenarioValidationError("zone_map", "JSON 区域映射必须是对象")
        mapping = {str(key): int(value) for key, value in raw.items()}
    else:
        frame = pd.read_csv(path, dtype={"raw_zone": str})
        if not {"raw_zone", "zone"} <= set(frame.columns):
            raise ScenarioValidationError("zone_map", "CSV 区域映射需要 raw_zone 与 zone 两列")
        mapping = dict(zip(frame["raw_zone"].astype(str), frame["zone"].astype(int)))
    return validate_zone_map(mapping)


def validate_zone_map(mapping: Mapping[Any, int]) -> Dict[str, int]:
    """检查映射的目标编号恰好覆盖 1..M（M ≥ 2）"""
    mapping = {str(key): int(value) for key, value in mapping.items()}
    targets = sorted(set(mapping.values()))
    if len(targets) < 2 or targets != list(range(1, len(targets) + 1)):
        raise ScenarioValidationError("zone_map", "目标区域编号必须连续覆盖 1..M 且 M ≥ 2")
    return mapping


def _read_trips(source: Union[str, Path, pd.DataFrame]) -> pd.DataFrame:
    if isinstance(source, pd.DataFrame):
        return source.copy()
    try:
        return pd.read_csv(source, dtype={"pickup_zone": str, "dropoff_zone": str})
    except pd.errors.EmptyDataError as e:
        raise ScenarioValidationError("trips", f"行程文件为空: {source}") from e


def ingest_trips(source: Union[str, Path, pd.DataFrame], zone_map: Mapping[Any, int],
                 hours: Optional[float] = None) -> IngestResult:
    """
    聚合行程记录

    Args:
        source: 行程 CSV 路径或 DataFrame
        zone_map: 原始区域编号 → 1..M
        hours: 数据覆盖的小时数；缺省时由 pickup_datetime 列的跨度推断

    Returns:
        IngestResult；无记录的区域对 τ 取反向区域对的均值，否则取全体均值

    Raises:
        ScenarioValidationError: 缺少列、过滤后为空或无法确定时间跨度
    """
    mapping = validate_zone_map(zone_map)
    M = max(mapping.values())
    trips = _read_trips(source)
    missing = [column for column in REQUIRED_COLUMNS if column not in trips.columns]
    if missing:
        raise ScenarioValidationError(f"trips.{missing[0]}", f"缺少列 {missing}")
    if trips.empty:
        raise ScenarioValidationError("trips", "行程文件没有记录")

    warnings: List[str] = []
    trips = trips.assign(
        origin=trips["pickup_zone"].astype(str).map(mapping),
        destination=trips["dropoff_zone"].astype(str).map(mapping),
        duration=pd.to_numeric(trips["duration_minutes"], errors="coerce"),
    )
    unmapped_mask = trips["origin"].isna() | trips["destination"].isna()
    unmapped = int(unmapped_mask.sum())
    if unmapped:
        raw_ids = sorted(
            set(trips.loc[trips["origin"].isna(), "pickup_zone"].astype(str))
            | set(trips.loc[trips["destination"].isna(), "dropoff_zone"].astype(str))
        )
        message = f"{unmapped} 条记录的区域编号不在映射中: {raw_ids[:10]}"
        warnings.append(message)
        app_logger.warning(message)

    bad_duration = ~unmapped_mask & ~(trips["duration"] > 0)
    zero_duration = int(bad_duration.sum())
    if zero_duration:
        message = f"剔除 {zero_duration} 条时长非正或无法解析的记录"
        warnings.append(message)
        app_logger.warning(message)

    kept = trips.loc[~unmapped_mask & ~bad_duration].copy()
    if kept.empty:
        raise ScenarioValidationError("trips", "过滤后没有有效行程")

    if hours is None:
        if TIME_COLUMN not in kept.columns:
            raise ScenarioValidationError("hours", f"未给出时间跨度且缺少 {TIME_COLUMN} 列")
        stamps = pd.to_datetime(kept[TIME_COLUMN], errors="coerce").dropna()
        span = (stamps.max() - stamps.min()).total_seconds() / 3600.0 if not stamps.empty else 0.0
        if not span > 0:
            raise ScenarioValidationError("hours", "无法由 pickup_datetime 推断正的时间跨度")
        hours = span
    if not hours > 0:
        raise ScenarioValidationError("hours", "时间跨度必须为正")

    kept["origin"] = kept["origin"].astype(int) - 1
    kept["destination"] = kept["destination"].astype(int) - 1
    grouped = kept.groupby(["origin", "destination"])["duration"].agg(["size", "mean"])

    counts = np.zeros((M, M))
    durations = np.full((M, M), np.nan)
    for (i, j), row in grouped.iterrows():
        counts[i, j] = row["size"]
        durations[i, j] = row["mean"] / 60.0

    base_demand = counts / hours
    trip_time = durations.copy()
    missing_pairs = np.isnan(trip_time)
    filled = int(missing_pairs.sum())
    if filled:
        overall = float(kept["duration"].mean() / 60.0)
        reverse = durations.T
        trip_time = np.where(missing_pairs, np.where(np.isnan(reverse), overall, reverse), trip_time)
        warnings.append(f"{filled} 个区域对没有行程记录，τ 已由反向或全体均值补齐")

    labels = [None] * M
    for raw, zone in sorted(mapping.items(), key=lambda item: (item[1], item[0])):
        if labels[zone - 1] is None:
            labels[zone - 1] = raw

    app_logger.info(
        f"导入 {len(kept)} 条行程（{hours:g} 小时）: M={M}, 未映射 {unmapped}, 时长非正 {zero_duration}"
    )
    return IngestResult(
        base_demand=base_demand, trip_time=trip_time, zones=[str(label) for label in labels],
        n_trips=int(len(kept)), hours=float(hours), unmapped=unmapped, zero_duration=zero_duration,
        filled_pairs=filled, warnings=warnings,
    )
