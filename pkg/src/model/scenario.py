"""
场景模型模块

Scenario 是不可变的问题实例：区域、阶段、OD 需求与行程时间矩阵，以及所有标定参数。
场景文件为 JSON，矩阵按行存储（数组的数组），单位见 docs/scenario-schema.md。
"""
import hashlib
import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError

from src.model.exceptions import ScenarioValidationError
from src.utils import app_logger


@dataclass(frozen=True)
class ChargeStationSpec:
    """充电站规格：V 个充电桩，平均充电时长 tau_c 小时"""
    V: int
    tau_c: float

    def to_dict(self) -> Dict[str, Any]:
        return {"V": self.V, "tau_c": self.tau_c}


@dataclass(frozen=True)
class SwapStationSpec:
    """
    换电站规格

    S 个换电工位、C 个电池充电器、B 块周转电池、排队容量 W、换电时长 tau_s 小时。
    """
    S: int
    C: int
    B: int
    W: int
    tau_s: float

    @property
    def service_rate(self) -> float:
        """单站最大换电速率 S/τ_s（辆/小时）"""
        return self.S / self.tau_s

    def to_dict(self) -> Dict[str, Any]:
        return {"S": self.S, "C": self.C, "B": self.B, "W": self.W, "tau_s": self.tau_s}

    def cache_key(self, tau_c: float) -> str:
        """等待时间表缓存键（与充电时长一同决定电池补电概率）"""
        payload = json.dumps({**self.to_dict(), "tau_c": tau_c}, sort_keys=True)
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()[:16]


def _frozen(values: Any) -> np.ndarray:
    array = np.array(values, dtype=float)
    array.setflags(write=False)
    return array


@dataclass(frozen=True, eq=False)
class Scenario:
    """问题实例（构造后不可变，可在并行进程间共享）"""
    M: int
    T: int
    base_demand: np.ndarray
    trip_time: np.ndarray
    phi: float
    psi: float
    alpha: float
    logit_sensitivity: float
    outside_price: float
    gamma_e: float
    gamma_g: float
    battery_range_hours: float
    cost_c: float
    cost_s: float
    budgets: np.ndarray
    cap: float
    charge_spec: ChargeStationSpec
    swap_spec: SwapStationSpec
    name: str = "scenario"
    warnings: tuple = field(default=(), compare=False)

    @property
    def cumulative_budgets(self) -> np.ndarray:
        """累计预算 b̃_t"""
        return np.cumsum(self.budgets)

    @property
    def total_budget(self) -> float:
        return float(np.sum(self.budgets))

    def with_budgets(self, budgets: Sequence[float]) -> "Scenario":
        """返回替换了阶段预算的新场景"""
        array = _frozen(budgets)
        if array.shape != (self.T,):
            raise ScenarioValidationError("budgets", f"需要 {self.T} 个阶段预算，实际 {array.shape}")
        if np.any(array < 0):
            raise ScenarioValidationError("budgets", "阶段预算必须非负")
        return replace(self, budgets=array)

    def with_total_budget(self, total: float) -> "Scenario":
        """
        按原有阶段比例缩放到给定总预算

        原预算全为 0 时平均分配到各阶段。
        """
        current = self.total_budget
        if current > 0:
            return self.with_budgets(self.budgets * (total / current))
        return self.with_budgets(np.full(self.T, total / self.T))

    def to_dict(self) -> Dict[str, Any]:
        """序列化为场景文件格式"""
        return {
            "name": self.name,
            "M": self.M,
            "T": self.T,
            "base_demand": self.base_demand.tolist(),
            "trip_time": self.trip_time.tolist(),
            "phi": self.phi,
            "psi": self.psi,
            "alpha": self.alpha,
            "logit_sensitivity": self.logit_sensitivity,
            "outside_price": self.outside_price,
            "gamma_e": self.gamma_e,
            "gamma_g": self.gamma_g,
            "battery_range_hours": self.battery_range_hours,
            "cost_c": self.cost_c,
            "cost_s": self.cost_s,
            "budgets": self.budgets.tolist(),
            "cap": self.cap,
            "charge_spec": self.charge_spec.to_dict(),
            "swap_spec": self.swap_spec.to_dict(),
        }

    def fingerprint(self) -> str:
        """场景内容哈希（用于元数据与缓存）"""
        payload = json.dumps(self.to_dict(), sort_keys=True)
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Scenario):
            return NotImplemented
        return self.to_dict() == other.to_dict()

    def __hash__(self) -> int:
        return hash(self.fingerprint())


class _ChargeSpecDocument(BaseModel):
    model_config = ConfigDict(extra="forbid")
    V: int
    tau_c: float


class _SwapSpecDocument(BaseModel):
    model_config = ConfigDict(extra="forbid")
    S: int
    C: int
    B: int
    W: int
    tau_s: float


class ScenarioDocument(BaseModel):
    """场景文件的结构校验（字段与类型），数值约束由 validate_scenario 检查"""
    model_config = ConfigDict(extra="ignore")

    name: str = "scenario"
    M: Optional[int] = None
    T: Optional[int] = None
    base_demand: List[List[float]]
    trip_time: List[List[float]]
    phi: float
    psi: float
    alpha: float
    logit_sensitivity: float
    outside_price: float
    gamma_e: float
    gamma_g: float
    battery_range_hours: float
    cost_c: float
    cost_s: float
    budgets: List[float]
    cap: float
    charge_spec: _ChargeSpecDocument
    swap_spec: _SwapSpecDocument
    description: Optional[str] = Field(default=None, description="说明文字，不参与计算")


_POSITIVE_FIELDS = (
    "phi", "psi", "alpha", "logit_sensitivity", "outside_price",
    "gamma_e", "gamma_g", "battery_range_hours", "cost_c", "cost_s",
)


def _check_matrix(name: str, rows: List[List[float]], size: int) -> np.ndarray:
    if len(rows) != size or any(len(row) != size for row in rows):
        raise ScenarioValidationError(name, f"矩阵维度必须为 {size}x{size}")
    matrix = np.array(rows, dtype=float)
    if not np.all(np.isfinite(matrix)):
        raise ScenarioValidationError(name, "矩阵包含非有限值")
    return matrix


class StationSpecDocument(BaseModel):
    """只含两类设施规格的文档（排队模型校验用），其余字段忽略"""
    model_config = ConfigDict(extra="ignore")

    charge_spec: _ChargeSpecDocument
    swap_spec: _SwapSpecDocument


def _check_specs(charge: _ChargeSpecDocument, swap: _SwapSpecDocument):
    if charge.V < 1:
        raise ScenarioValidationError("charge_spec.V", "充电桩数量至少为 1")
    if charge.tau_c <= 0:
        raise ScenarioValidationError("charge_spec.tau_c", "充电时长必须为正")

    for name in ("S", "C", "B"):
        if getattr(swap, name) < 1:
            raise ScenarioValidationError(f"swap_spec.{name}", "必须至少为 1")
    if swap.W < swap.S:
        raise ScenarioValidationError("swap_spec.W", "排队容量不得小于换电工位数")
    if swap.tau_s <= 0:
        raise ScenarioValidationError("swap_spec.tau_s", "换电时长必须为正")

    warnings = []
    if swap.B > swap.C:
        warnings.append("swap_spec.B > swap_spec.C：同时充电的电池数不超过 C")
    return (
        ChargeStationSpec(V=charge.V, tau_c=charge.tau_c),
        SwapStationSpec(S=swap.S, C=swap.C, B=swap.B, W=swap.W, tau_s=swap.tau_s),
        warnings,
    )


def _first_error(e: ValidationError) -> ScenarioValidationError:
    first = e.errors()[0]
    location = ".".join(str(part) for part in first["loc"]) or "<root>"
    if first["type"] == "missing":
        return ScenarioValidationError(location, "缺少字段")
    return ScenarioValidationError(location, first["msg"])


def _from_document(doc: ScenarioDocument) -> Scenario:
    M = doc.M if doc.M is not None else len(doc.base_demand)
    T = doc.T if doc.T is not None else len(doc.budgets)

    if M < 2:
        raise ScenarioValidationError("M", "区域数量至少为 2")
    if T < 1:
        raise ScenarioValidationError("T", "阶段数量至少为 1")

    base_demand = _check_matrix("base_demand", doc.base_demand, M)
    trip_time = _check_matrix("trip_time", doc.trip_time, M)
    if np.any(base_demand < 0):
        raise ScenarioValidationError("base_demand", "需求必须非负")
    if np.any(trip_time <= 0):
        raise ScenarioValidationError("trip_time", "行程时间必须严格为正（含对角线）")

    for name in _POSITIVE_FIELDS:
        if not getattr(doc, name) > 0:
            raise ScenarioValidationError(name, "必须严格为正")

    if len(doc.budgets) != T:
        raise ScenarioValidationError("budgets", f"需要 {T} 个阶段预算，实际 {len(doc.budgets)}")
    if any(b < 0 for b in doc.budgets):
        raise ScenarioValidationError("budgets", "阶段预算必须非负")
    if doc.cap < 0:
        raise ScenarioValidationError("cap", "设施数量上限必须非负")

    charge_spec, swap_spec, warnings = _check_specs(doc.charge_spec, doc.swap_spec)
    if doc.gamma_e >= doc.gamma_g:
        warnings.insert(0, "gamma_e >= gamma_g：电动车运营成本不低于燃油车")
    for message in warnings:
        app_logger.warning(f"场景 {doc.name}: {message}")

    return Scenario(
        M=M,
        T=T,
        base_demand=_frozen(base_demand),
        trip_time=_frozen(trip_time),
        phi=doc.phi,
        psi=doc.psi,
        alpha=doc.alpha,
        logit_sensitivity=doc.logit_sensitivity,
        outside_price=doc.outside_price,
        gamma_e=doc.gamma_e,
        gamma_g=doc.gamma_g,
        battery_range_hours=doc.battery_range_hours,
        cost_c=doc.cost_c,
        cost_s=doc.cost_s,
        budgets=_frozen(doc.budgets),
        cap=doc.cap,
        charge_spec=charge_spec,
        swap_spec=swap_spec,
        name=doc.name,
        warnings=tuple(warnings),
    )


def validate_scenario(raw: Union[Dict[str, Any], Scenario]) -> Scenario:
    """
    校验场景文档并构造 Scenario

    Args:
        raw: 已解析的场景文档（dict）或 Scenario

    Returns:
        满足全部约束的 Scenario；对已合法的 Scenario 再次校验得到相等的对象
    """
    if isinstance(raw, Scenario):
        raw = raw.to_dict()
    if not isinstance(raw, dict):
        raise ScenarioValidationError("<root>", "场景文档顶层必须是 JSON 对象")

    try:
        doc = ScenarioDocument.model_validate(raw)
    except ValidationError as e:
        raise _first_error(e) from e

    return _from_document(doc)


def validate_station_specs(raw: Dict[str, Any]) -> tuple:
    """
    校验设施规格文档（完整场景文件亦可）

    Returns:
        (ChargeStationSpec, SwapStationSpec)
    """
    if not isinstance(raw, dict):
        raise ScenarioValidationError("<root>", "规格文档顶层必须是 JSON 对象")
    try:
        doc = StationSpecDocument.model_validate(raw)
    except ValidationError as e:
        raise _first_error(e) from e
    charge_spec, swap_spec, warnings = _check_specs(doc.charge_spec, doc.swap_spec)
    for message in warnings:
        app_logger.warning(message)
    return charge_spec, swap_spec


def load_station_specs(path: Union[str, Path]) -> tuple:
    """从 JSON 文件读取设施规格"""
    with open(Path(path), "r", encoding="utf-8") as f:
        raw = json.load(f)
    return validate_station_specs(raw)


def load_scenario(path: Union[str, Path]) -> Scenario:
    """
    从 JSON 文件加载并校验场景

    Args:
        path: 场景文件路径

    Returns:
        Scenario
    """
    path = Path(path)
    with open(path, "r", encoding="utf-8") as f:
        raw = json.load(f)
    scenario = validate_scenario(raw)
    app_logger.info(f"加载场景 {scenario.name}: M={scenario.M}, T={scenario.T}, 总预算={scenario.total_budget:g}")
    return scenario
