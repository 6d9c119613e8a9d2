"""
结果文件写出

所有文件先写入同目录临时文件再原子替换；CSV 附带 <文件名>.meta.json 元数据。
"""
import json
import math
import os
import platform
import tempfile
from pathlib import Path
from typing import Any, Dict, Iterable, List, Mapping, Optional, Sequence

import numpy as np
import pandas as pd
import scipy

from src.config import settings
from src.model.scenario import Scenario
from src.utils import app_logger


def to_jsonable(value: Any) -> Any:
    """numpy 类型转为内置类型，非有限浮点数转为 None"""
    if isinstance(value, Mapping):
        return {str(key): to_jsonable(item) for key, item in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_jsonable(item) for item in value]
    if isinstance(value, np.ndarray):
        return to_jsonable(value.tolist())
    if isinstance(value, (np.bool_, bool)):
        return bool(value)
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        return value if math.isfinite(value) else None
    return value


def _atomic_write(path: Path, text: str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as f:
            f.write(text)
        os.replace(tmp, path)
    finally:
        if os.path.exists(tmp):
            os.remove(tmp)
    return path


def write_json(path: Path, payload: Any) -> Path:
    """写出 JSON（键排序，保证重复运行逐字节一致）"""
    text = json.dumps(to_jsonable(payload), ensure_ascii=False, indent=2, sort_keys=True)
    _atomic_write(path, text + "\n")
    app_logger.info(f"已写出 {path}")
    return Path(path)


def metadata(scenario: Optional[Scenario] = None, seed: Optional[int] = None,
             extra: Optional[Dict[str, Any]] = None) -> Dict[str, Any]:
    """元数据：场景指纹、随机种子与依赖版本"""
    meta: Dict[str, Any] = {
        "generator": f"chargenet {settings.api_version}",
        "seed": seed,
        "versions": {
            "python": platform.python_version(),
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "pandas": pd.__version__,
        },
    }
    if scenario is not None:
        meta["scenario"] = scenario.name
        meta["scenario_hash"] = scenario.fingerprint()
    if extra:
        meta.update(extra)
    return meta


def write_csv(path: Path, rows: Iterable[Dict[str, Any]], columns: Optional[Sequence[str]] = None,
              meta: Optional[Dict[str, Any]] = None) -> Path:
    """
    写出带表头的 CSV 及其元数据

    Args:
        path: 目标文件
        rows: 行（字典）
        columns: 列顺序，缺省取第一行的键
        meta: 元数据，写入 <path>.meta.json

    Returns:
        写出的路径
    """
    rows: List[Dict[str, Any]] = list(rows)
    frame = pd.DataFrame(rows, columns=list(columns) if columns is not None else None)
    _atomic_write(path, frame.to_csv(index=False, float_format="%.10g", lineterminator="\n"))
    if meta is not None:
        write_json(Path(f"{path}.meta.json"), {**meta, "rows": len(rows), "columns": list(frame.columns)})
    app_logger.info(f"已写出 {path}（{len(rows)} 行）")
    return Path(path)
