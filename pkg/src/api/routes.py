"""
API路由定义
"""
import math
from datetime import datetime
from typing import Any, Dict

from fastapi import APIRouter, Body
from fastapi.concurrency import run_in_threadpool

from src.bound.report import certify
from src.config import settings
from src.config.solver_config import load_solver_config
from src.model.scenario import ChargeStationSpec, SwapStationSpec, validate_scenario
from src.queues.charging import erlang_c_wait
from src.queues.probe import convexity_probe, probe_flags
from src.queues.swapping import swap_metrics
from src.utils import app_logger
from .models import (
    ChargingQueueRequest,
    HealthResponse,
    ProbeRequest,
    ProbeResponse,
    QueueMetricsResponse,
    ScenarioValidationResponse,
    SolveRequest,
    SolveResponse,
    SwapQueueRequest,
)


router = APIRouter(prefix="/api/v1", tags=["充换电规划"])


@router.get("/health", response_model=HealthResponse, summary="健康检查")
async def health() -> HealthResponse:
    """
    健康检查接口
    """
    return HealthResponse(
        status="healthy",
        version=settings.api_version,
        timestamp=datetime.now().isoformat()
    )


@router.post("/scenarios/validate", response_model=ScenarioValidationResponse, summary="校验场景")
async def validate(document: Dict[str, Any] = Body(...)) -> ScenarioValidationResponse:
    """
    校验场景文档

    不满足约束时返回 422，detail.field 指出第一个被违反的约束。
    """
    scenario = validate_scenario(document)
    return ScenarioValidationResponse(
        name=scenario.name,
        M=scenario.M,
        T=scenario.T,
        total_budget=scenario.total_budget,
        fingerprint=scenario.fingerprint(),
        warnings=list(scenario.warnings),
    )


@router.post("/queues/charging", response_model=QueueMetricsResponse, summary="充电站等待时间")
async def charging_queue(request: ChargingQueueRequest) -> QueueMetricsResponse:
    """
    Erlang C 等待时间；利用率 ρ ≥ 1 时返回 409
    """
    metrics = erlang_c_wait(request.arrival_rate, ChargeStationSpec(V=request.V, tau_c=request.tau_c))
    return QueueMetricsResponse(**metrics.to_dict())


@router.post("/queues/swap", response_model=QueueMetricsResponse, summary="换电站等待时间")
async def swap_queue(request: SwapQueueRequest) -> QueueMetricsResponse:
    """
    换电站平稳分布下的等待时间、站内车辆数与阻塞概率
    """
    spec = SwapStationSpec(**request.spec.model_dump())
    metrics = await run_in_threadpool(swap_metrics, request.arrival_rate, spec, request.tau_c)
    return QueueMetricsResponse(**metrics.to_dict())


@router.post("/queues/probe", response_model=ProbeResponse, summary="等待时间凸性探针")
async def probe(request: ProbeRequest) -> ProbeResponse:
    """
    固定区域需求、改变设施数量，返回逐点等待时间与差分
    """
    rows = await run_in_threadpool(
        convexity_probe,
        request.queue_kind,
        request.k_fixed,
        request.x_range,
        ChargeStationSpec(**request.charge_spec.model_dump()),
        SwapStationSpec(**request.swap_spec.model_dump()),
    )
    return ProbeResponse(rows=[row.to_dict() for row in rows], flags=probe_flags(rows))


@router.post("/solve", response_model=SolveResponse, summary="求解场景上下界")
async def solve(request: SolveRequest) -> SolveResponse:
    """
    同步求解：下界、松弛问题与上界

    - **scenario**: 场景文档
    - **mode**: joint 或 charging_only
    - **total_budget**: 覆盖总预算（可选）
    - **overrides**: 求解器参数覆盖（可选）
    """
    scenario = validate_scenario(request.scenario)
    if request.total_budget is not None:
        scenario = scenario.with_total_budget(request.total_budget)
    config = load_solver_config().with_overrides(**request.overrides)
    app_logger.info(f"收到求解请求: 场景={scenario.name}, 模式={request.mode}")

    report = await run_in_threadpool(certify, scenario, config, request.mode)
    gap = report.gap_pct
    return SolveResponse(
        scenario=scenario.name,
        mode=report.mode,
        budget=scenario.total_budget,
        LB=report.lower_bound,
        UB=report.upper_bound,
        gap_pct=gap if math.isfinite(gap) else None,
        ub_margin=report.upper.margin,
        long_run_profit=report.lower.long_run_profit,
        avg_utilization=report.lower.avg_utilization,
        deployment=report.deployment_rows(),
    )
