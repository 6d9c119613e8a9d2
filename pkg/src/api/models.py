"""
API数据模型
"""
from typing import Any, Dict, List, Literal, Optional

from pydantic import BaseModel, Field


class HealthResponse(BaseModel):
    """健康检查响应模型"""
    status: str = Field(..., description="服务状态")
    version: str = Field(..., description="版本号")
    timestamp: str = Field(..., description="时间戳")


class ScenarioValidationResponse(BaseModel):
    """场景校验结果"""
    name: str
    M: int = Field(..., description="区域数量")
    T: int = Field(..., description="阶段数量")
    total_budget: float
    fingerprint: str = Field(..., description="场景内容哈希")
    warnings: List[str] = Field(default_factory=list, description="软约束告警")


class ChargeSpecModel(BaseModel):
    """充电站规格"""
    V: int = Field(..., ge=1, description="充电桩数量")
    tau_c: float = Field(..., gt=0, description="平均充电时长（小时）")


class SwapSpecModel(BaseModel):
    """换电站规格"""
    S: int = Field(..., ge=1, description="换电工位数")
    C: int = Field(..., ge=1, description="电池充电器数量")
    B: int = Field(..., ge=1, description="周转电池数量")
    W: int = Field(..., ge=1, description="站内容量")
    tau_s: float = Field(..., gt=0, description="换电时长（小时）")


class ChargingQueueRequest(BaseModel):
    """充电站排队请求"""
    arrival_rate: float = Field(..., ge=0, description="单站到达率（辆/小时）")
    V: int = Field(..., ge=1, description="充电桩数量")
    tau_c: float = Field(..., gt=0, description="平均充电时长（小时）")

    class Config:
        json_schema_extra = {
            "example": {"arrival_rate": 1.0, "V": 2, "tau_c": 1.0}
        }


class SwapQueueRequest(BaseModel):
    """换电站排队请求"""
    arrival_rate: float = Field(..., ge=0, description="单站到达率（辆/小时）")
    spec: SwapSpecModel
    tau_c: float = Field(..., gt=0, description="电池平均充电时长（小时）")


class QueueMetricsResponse(BaseModel):
    """排队指标"""
    utilization: float
    empty_prob: float
    wait: float = Field(..., description="期望排队等待时间（小时）")
    block: float = Field(0.0, description="阻塞概率")
    L: float = Field(0.0, description="站内平均车辆数")


class ProbeRequest(BaseModel):
    """凸性探针请求"""
    queue_kind: Literal["charging", "swapping"]
    k_fixed: float = Field(10.0, gt=0, description="区域充电需求（辆/小时）")
    x_range: List[float] = Field(default_factory=lambda: [float(x) for x in range(1, 21)],
                                 min_length=1, description="设施数量")
    charge_spec: ChargeSpecModel
    swap_spec: SwapSpecModel


class ProbeResponse(BaseModel):
    """凸性探针结果"""
    rows: List[Dict[str, Any]]
    flags: Dict[str, int]


class SolveRequest(BaseModel):
    """求解请求（同步执行，适合小规模实例）"""
    scenario: Dict[str, Any] = Field(..., description="场景文档")
    mode: Literal["joint", "charging_only"] = "joint"
    total_budget: Optional[float] = Field(None, ge=0, description="覆盖总预算（按阶段比例分配）")
    overrides: Dict[str, Any] = Field(default_factory=dict, description="求解器参数覆盖，如 seed、multistart")


class SolveResponse(BaseModel):
    """求解结果摘要"""
    scenario: str
    mode: str
    budget: float
    LB: float
    UB: float
    gap_pct: Optional[float] = Field(None, description="最优性间隙（%）；下界为 0 时为空")
    ub_margin: float
    long_run_profit: float
    avg_utilization: Optional[float] = None
    deployment: List[Dict[str, Any]] = Field(default_factory=list)
