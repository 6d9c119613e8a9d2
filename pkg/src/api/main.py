"""
FastAPI主应用
"""
from contextlib import asynccontextmanager

from fastapi import FastAPI, Request
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse
from src.config import settings
from src.model.exceptions import (
    DomainError,
    InfeasibleError,
    ScenarioValidationError,
    UnstableQueueError,
)
from src.utils import app_logger
from .routes import router


@asynccontextmanager
async def lifespan(app: FastAPI):
    app_logger.info(
        f"启动 {settings.api_title} v{settings.api_version}，"
        f"求解器配置 {settings.resolve_path(settings.solver_config_path)}，"
        f"并行进程数 {settings.resolve_workers()}"
    )
    yield
    app_logger.info("关闭应用")


app = FastAPI(
    title=settings.api_title,
    version=settings.api_version,
    description="网约车电动化的充电站与换电站多阶段联合规划服务：排队模型、场景校验与上下界求解",
    lifespan=lifespan,
)

app.add_middleware(
    CORSMiddleware,
    allow_origins=settings.cors_origins,
    allow_credentials=True,
    allow_methods=["*"],
    allow_headers=["*"],
)
app.include_router(router)


def _error(status_code: int, error: str, exc: Exception, **extra) -> JSONResponse:
    return JSONResponse(status_code=status_code, content={"error": error, **extra, "detail": str(exc)})


@app.get("/", tags=["根路径"])
async def root():
    return {
        "message": "欢迎使用充换电设施联合规划服务",
        "version": settings.api_version,
        "docs": "/docs",
        "health": "/api/v1/health",
    }


@app.exception_handler(ScenarioValidationError)
async def scenario_exception_handler(request: Request, exc: ScenarioValidationError):
    """场景校验失败，指明出错字段"""
    app_logger.warning(f"场景校验失败: {exc}")
    return JSONResponse(
        status_code=422,
        content={"error": "Scenario Validation Error", "field": exc.field, "detail": exc.message},
    )


@app.exception_handler(DomainError)
async def domain_exception_handler(request: Request, exc: DomainError):
    app_logger.warning(f"参数超出定义域: {exc}")
    return _error(422, "Domain Error", exc)


@app.exception_handler(UnstableQueueError)
async def unstable_exception_handler(request: Request, exc: UnstableQueueError):
    return _error(409, "Unstable Queue", exc, rho=exc.rho)


@app.exception_handler(InfeasibleError)
async def infeasible_exception_handler(request: Request, exc: InfeasibleError):
    app_logger.error(f"求解失败（不可行）: {exc}")
    return _error(409, "Infeasible", exc, constraint=exc.constraint)


@app.exception_handler(Exception)
async def global_exception_handler(request: Request, exc: Exception):
    app_logger.exception(f"未处理的异常: {exc}")
    return _error(500, "Internal Server Error", exc)
