"""
配置管理模块
"""
import os
from typing import List
from pathlib import Path
from pydantic_settings import BaseSettings
from pydantic import Field, ConfigDict

# 获取项目根目录
PROJECT_ROOT = Path(__file__).parent.parent.parent
ENV_FILE = PROJECT_ROOT / ".env"


class Settings(BaseSettings):
    """应用配置"""

    model_config = ConfigDict(
        protected_namespaces=('settings_',),
        extra='ignore',
        env_file=str(ENV_FILE),  # 使用绝对路径,确保无论在哪个目录运行都能找到 .env 文件
        env_file_encoding='utf-8',
        case_sensitive=False
    )

    # API配置
    api_host: str = Field(default="0.0.0.0", alias="API_HOST")
    api_port: int = Field(default=8000, alias="API_PORT")
    api_title: str = Field(default="充换电设施联合规划服务", alias="API_TITLE")
    api_version: str = Field(default="1.0.0", alias="API_VERSION")
    cors_origins: List[str] = Field(default=["*"], alias="CORS_ORIGINS")

    # 日志配置
    log_level: str = Field(default="INFO", alias="LOG_LEVEL")
    log_format: str = Field(default="text", alias="LOG_FORMAT")
    log_dir: str = Field(default="logs", alias="LOG_DIR")

    # 计算配置
    workers: int = Field(default=0, alias="CHARGENET_WORKERS")
    cache_dir: str = Field(default=".cache/chargenet", alias="CHARGENET_CACHE_DIR")
    output_dir: str = Field(default="output", alias="CHARGENET_OUTPUT_DIR")
    solver_config_path: str = Field(default="config/solver.yaml", alias="CHARGENET_SOLVER_CONFIG")

    def resolve_workers(self, override: int | None = None) -> int:
        """
        解析并行进程数

        Args:
            override: 命令行显式指定的进程数

        Returns:
            实际使用的进程数（至少为1）
        """
        if override is not None and override > 0:
            return override
        if self.workers > 0:
            return self.workers
        return max(1, min(os.cpu_count() or 1, 8))

    def resolve_path(self, value: str) -> Path:
        """相对路径按项目根目录解析"""
        path = Path(value)
        return path if path.is_absolute() else PROJECT_ROOT / path


# 全局配置实例
settings = Settings()
