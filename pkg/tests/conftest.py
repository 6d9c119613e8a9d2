"""
测试公共夹具
"""
import json
from pathlib import Path

import pytest
import yaml

from src.config import settings
from src.config.solver_config import GridOptions, OptimizerOptions, SolverConfig
from src.model.scenario import ChargeStationSpec, SwapStationSpec, load_scenario, validate_scenario
from src.queues.swapping import get_swap_table

SCENARIO_DIR = Path(__file__).parent.parent / "data" / "scenarios"


@pytest.fixture(scope="session", autouse=True)
def isolated_cache(tmp_path_factory):
    """换电等待时间表缓存写到临时目录"""
    with pytest.MonkeyPatch.context() as mp:
        mp.setattr(settings, "cache_dir", str(tmp_path_factory.mktemp("cache")))
        yield


@pytest.fixture
def smoke_path() -> Path:
    return SCENARIO_DIR / "smoke_2zone.json"


@pytest.fixture
def smoke_document(smoke_path) -> dict:
    """两区域冒烟场景的原始文档（每个测试一份副本，可随意修改）"""
    with open(smoke_path, "r", encoding="utf-8") as f:
        return json.load(f)


@pytest.fixture
def smoke_scenario(smoke_path):
    return load_scenario(smoke_path)


@pytest.fixture
def manhattan_scenario():
    return load_scenario(SCENARIO_DIR / "manhattan6.json")


@pytest.fixture
def priority_scenario():
    return load_scenario(SCENARIO_DIR / "priority_2zone.json")


@pytest.fixture
def make_scenario(smoke_document):
    """在冒烟场景基础上覆盖部分字段"""

    def _make(**overrides):
        return validate_scenario({**smoke_document, **overrides})

    return _make


@pytest.fixture
def charge_spec() -> ChargeStationSpec:
    return ChargeStationSpec(V=10, tau_c=1.0)


@pytest.fixture
def swap_spec() -> SwapStationSpec:
    return SwapStationSpec(S=1, C=10, B=10, W=100, tau_s=1.0 / 12.0)


@pytest.fixture(scope="session")
def swap_table():
    """标准换电站规格的插值表（进程内缓存，整个会话只构造一次）"""
    spec = SwapStationSpec(S=1, C=10, B=10, W=100, tau_s=1.0 / 12.0)
    return get_swap_table(spec, 1.0)


@pytest.fixture
def fast_config() -> SolverConfig:
    """小规模求解配置：少量起点、粗网格、单进程"""
    return SolverConfig(
        optimizer=OptimizerOptions(max_iters=150, outer_iters=6, multistart=2, seed=7),
        grid=GridOptions(p=4, n_ve=3, n_vg=3, r=3, k=4, f_tilde=3, refine_sample=0.5),
        workers=1,
    )


@pytest.fixture
def fast_config_file(tmp_path, fast_config) -> Path:
    """写成 YAML 的小规模配置（命令行测试用）"""
    path = tmp_path / "solver.yaml"
    with open(path, "w", encoding="utf-8") as f:
        yaml.safe_dump(fast_config.model_dump(), f, allow_unicode=True)
    return path
