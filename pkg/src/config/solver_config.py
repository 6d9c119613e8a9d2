"""
求解器配置管理模块

求解器参数（增广拉格朗日外层/内层迭代、多起点、网格分辨率等）以 YAML 文件描述，
由 SolverConfigManager 加载为 pydantic 模型。
"""
import yaml
from typing import Any, Dict, List, Optional
from pathlib import Path
from pydantic import BaseModel, Field, field_validator, model_validator
from src.config.settings import settings
from src.utils import app_logger


class OptimizerOptions(BaseModel):
    """原问题求解（下界）参数"""
    max_iters: int = Field(default=400, gt=0, description="内层 L-BFGS-B 最大迭代次数")
    outer_iters: int = Field(default=12, gt=0, description="增广拉格朗日外层迭代次数")
    kkt_tol: float = Field(default=1e-6, gt=0, description="约束违背/KKT 残差容差")
    penalty_init: float = Field(default=10.0, gt=0, description="初始罚参数")
    penalty_growth: float = Field(default=4.0, gt=1, description="罚参数增长因子")
    multistart: int = Field(default=8, ge=1, description="多起点数量")
    seed: int = Field(default=20240101, description="随机种子")
    fd_step: float = Field(default=1e-6, gt=0, description="前向差分相对步长")
    eps_pos: float = Field(default=1e-6, gt=0, description="严格不等式的数值下限")
    rho_max: float = Field(default=0.98, gt=0, lt=1, description="充电站利用率上限")
    swap_load_factor: float = Field(default=1.5, gt=0, description="单站换电到达率上限（S/τ_s 的倍数）")
    discount: float = Field(default=1.0, gt=0, le=1, description="阶段折现因子")
    ev_mandatory: bool = Field(default=False, description="是否强制每个区域部署电动车")


class BoxOptions(BaseModel):
    """决策变量盒约束"""
    price_max_factor: float = Field(default=3.0, gt=0, description="价格上限（外部选择价格 p0 的倍数）")
    idle_max: float = Field(default=400.0, gt=0, description="每区域空闲车辆上限")
    flow_max: float = Field(default=200.0, gt=0, description="每个 OD 对的调度流量上限")


class GridOptions(BaseModel):
    """子问题 ȳ 网格参数"""
    p: int = Field(default=12, ge=2)
    n_ve: int = Field(default=8, ge=2)
    n_vg: int = Field(default=8, ge=2)
    r: int = Field(default=11, ge=2)
    k: int = Field(default=10, ge=2)
    f_tilde: int = Field(default=6, ge=2)
    slab: List[float] = Field(default_factory=lambda: [0.25, 4.0], description="以锚点为中心的网格缩放范围")
    polish: bool = Field(default=True, description="网格搜索后是否做连续局部精修")
    refine_sample: float = Field(default=0.10, gt=0, le=1, description="加密复核的子问题抽样比例")
    refine_threshold: float = Field(default=1e-3, gt=0, description="触发全局加密的相对偏移阈值")

    @field_validator("slab")
    @classmethod
    def check_slab(cls, value: List[float]) -> List[float]:
        if len(value) != 2 or not (0 < value[0] <= 1 <= value[1]):
            raise ValueError("slab 必须形如 [lo, hi] 且 0 < lo <= 1 <= hi")
        return value

    def resolutions(self) -> Dict[str, int]:
        """返回各维度分辨率"""
        return {
            "p": self.p, "n_ve": self.n_ve, "n_vg": self.n_vg,
            "r": self.r, "k": self.k, "f_tilde": self.f_tilde,
        }

    def doubled(self) -> "GridOptions":
        """分辨率加倍后的网格（用于加密复核）"""
        return self.model_copy(update={
            name: 2 * value - 1 for name, value in self.resolutions().items()
        })


class SolverConfig(BaseModel):
    """求解器配置"""
    optimizer: OptimizerOptions = Field(default_factory=OptimizerOptions)
    boxes: BoxOptions = Field(default_factory=BoxOptions)
    grid: GridOptions = Field(default_factory=GridOptions)
    workers: Optional[int] = Field(default=None, description="并行进程数，缺省时读取 CHARGENET_WORKERS")

    @model_validator(mode="after")
    def check_consistency(self) -> "SolverConfig":
        if self.optimizer.eps_pos >= 1e-2:
            raise ValueError("eps_pos 过大，应远小于模型单位")
        return self

    def with_overrides(self, **overrides: Any) -> "SolverConfig":
        """
        应用命令行覆盖项

        Args:
            overrides: seed / workers / multistart 等，值为 None 的项被忽略

        Returns:
            新的配置对象
        """
        optimizer_update = {
            key: value for key, value in overrides.items()
            if value is not None and key in OptimizerOptions.model_fields
        }
        update: Dict[str, Any] = {}
        if optimizer_update:
            update["optimizer"] = self.optimizer.model_copy(update=optimizer_update)
        if overrides.get("workers") is not None:
            update["workers"] = overrides["workers"]
        return self.model_copy(update=update)


class SolverConfigManager:
    """求解器配置管理器"""

    def __init__(self, config_path: Optional[Path] = None):
        """
        初始化配置管理器

        Args:
            config_path: 配置文件路径，默认读取 CHARGENET_SOLVER_CONFIG
        """
        if config_path is None:
            config_path = settings.resolve_path(settings.solver_config_path)

        self.config_path = Path(config_path)
        self._config: Optional[SolverConfig] = None

    def load_config(self) -> SolverConfig:
        """
        加载配置文件

        文件不存在时使用默认配置；文件存在但内容非法时抛出 ValueError。

        Returns:
            求解器配置
        """
        if self._config is not None:
            return self._config

        if not self.config_path.exists():
            app_logger.warning(f"求解器配置文件不存在: {self.config_path}，使用默认配置")
            self._config = SolverConfig()
            return self._config

        try:
            with open(self.config_path, 'r', encoding='utf-8') as f:
                raw = yaml.safe_load(f) or {}
        except yaml.YAMLError as e:
            app_logger.error(f"解析求解器配置失败: {str(e)}")
            raise ValueError(f"无法解析配置文件 {self.config_path}: {e}") from e

        if not isinstance(raw, dict):
            raise ValueError(f"配置文件 {self.config_path} 顶层必须是映射")

        self._config = SolverConfig.model_validate(raw)
        app_logger.info(f"已加载求解器配置: {self.config_path}")
        return self._config

    def reload_config(self) -> SolverConfig:
        """重新加载配置"""
        self._config = None
        return self.load_config()


def load_solver_config(config_path: Optional[Path] = None) -> SolverConfig:
    """加载求解器配置的便捷函数"""
    return SolverConfigManager(config_path).load_config()
