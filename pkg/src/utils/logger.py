"""
日志工具模块

控制台日志写到 stderr，stdout 只留给命令行的摘要行；文件日志按天滚动。
"""
import sys
from typing import Optional

from loguru import logger
from src.config import settings

TEXT_FORMAT = (
    "<green>{time:YYYY-MM-DD HH:mm:ss}</green> | <level>{level: <8}</level> | "
    "<cyan>{name}</cyan>:<cyan>{function}</cyan>:<cyan>{line}</cyan> - <level>{message}</level>"
)
FILE_FORMAT = "{time:YYYY-MM-DD HH:mm:ss.SSS} | {level: <8} | {process.id} | {name}:{function}:{line} - {message}"


def setup_logger(level: Optional[str] = None, log_format: Optional[str] = None):
    """
    配置日志

    Args:
        level: 日志级别，缺省读取 LOG_LEVEL
        log_format: json 或 text，缺省读取 LOG_FORMAT

    Returns:
        loguru logger
    """
    level = (level or settings.log_level).upper()
    serialize = (log_format or settings.log_format) == "json"

    logger.remove()
    logger.add(
        sys.stderr,
        format="{message}" if serialize else TEXT_FORMAT,
        level=level,
        serialize=serialize,
        colorize=not serialize,
    )

    log_dir = settings.resolve_path(settings.log_dir)
    log_dir.mkdir(parents=True, exist_ok=True)
    # 多进程求解时各进程都会写同一文件
    logger.add(
        str(log_dir / "chargenet_{time:YYYY-MM-DD}.log"),
        format=FILE_FORMAT,
        rotation="00:00",
        retention="30 days",
        level=level,
        encoding="utf-8",
        enqueue=True,
        serialize=serialize,
    )
    return logger


app_logger = setup_logger()
