"""
启动规划服务

    python run.py            # 读取 .env 中的 API_HOST / API_PORT
    UVICORN_RELOAD=true python run.py
"""
import os
import sys
from pathlib import Path

import uvicorn
from dotenv import load_dotenv

PROJECT_ROOT = Path(__file__).parent
os.chdir(PROJECT_ROOT)
load_dotenv(PROJECT_ROOT / ".env", override=False)


def prepare_dirs(settings) -> None:
    """日志、缓存与输出目录"""
    for value in (settings.log_dir, settings.cache_dir, settings.output_dir):
        settings.resolve_path(value).mkdir(parents=True, exist_ok=True)


def main() -> int:
    from src.config import settings

    prepare_dirs(settings)
    solver_config = settings.resolve_path(settings.solver_config_path)
    reload = os.getenv("UVICORN_RELOAD", "false").lower() == "true"

    print("=" * 50)
    print(f"🚀 {settings.api_title} v{settings.api_version}")
    print(f"  - API地址: http://{settings.api_host}:{settings.api_port}")
    print(f"  - 文档: http://localhost:{settings.api_port}/docs")
    print(f"  - 求解器配置: {solver_config}{'' if solver_config.exists() else '（不存在，使用默认参数）'}")
    print(f"  - 并行进程数: {settings.resolve_workers()}")
    print(f"  - 自动重载: {'开启' if reload else '关闭'}")
    print("=" * 50)

    try:
        uvicorn.run(
            "src.api.main:app",
            host=settings.api_host,
            port=settings.api_port,
            reload=reload,
            log_level=settings.log_level.lower(),
        )
    except KeyboardInterrupt:
        print("\n服务已停止")
    return 0


if __name__ == "__main__":
    sys.exit(main())
