"""
求解器配置测试
"""
import pytest
from pydantic import ValidationError

from src.config.settings import Settings
from src.config.solver_config import (
    GridOptions,
    OptimizerOptions,
    SolverConfig,
    SolverConfigManager,
    load_solver_config,
)


class TestSolverConfig:
    """求解器配置模型测试"""

    def test_defaults(self):
        """测试默认值"""
        config = SolverConfig()
        assert config.optimizer.multistart == 8
        assert config.optimizer.ev_mandatory is False
        assert config.grid.slab == [0.25, 4.0]
        assert config.workers is None

    def test_overrides_ignore_none(self):
        """测试值为 None 的覆盖项被忽略"""
        config = SolverConfig().with_overrides(seed=None, workers=None, multistart=3)
        assert config.optimizer.seed == OptimizerOptions().seed
        assert config.optimizer.multistart == 3
        assert config.workers is None

    def test_overrides_workers(self):
        """测试覆盖并行进程数"""
        assert SolverConfig().with_overrides(workers=4).workers == 4

    def test_eps_pos_must_be_small(self):
        """测试严格不等式下限过大"""
        with pytest.raises(ValidationError):
            SolverConfig(optimizer=OptimizerOptions(eps_pos=0.05))


class TestGridOptions:
    """网格参数测试"""

    def test_doubled(self):
        """测试加倍分辨率保留原有网格点"""
        grid = GridOptions(p=4, n_ve=3, n_vg=3, r=3, k=4, f_tilde=3)
        doubled = grid.doubled()
        assert doubled.resolutions() == {"p": 7, "n_ve": 5, "n_vg": 5, "r": 5, "k": 7, "f_tilde": 5}
        assert doubled.slab == grid.slab

    @pytest.mark.parametrize("slab", [[0.5], [1.5, 4.0], [0.25, 0.5], [0.0, 2.0]])
    def test_invalid_slab(self, slab):
        """测试非法缩放范围"""
        with pytest.raises(ValidationError):
            GridOptions(slab=slab)


class TestSolverConfigManager:
    """配置文件加载测试"""

    def test_missing_file_uses_defaults(self, tmp_path):
        """测试配置文件不存在时使用默认配置"""
        config = load_solver_config(tmp_path / "missing.yaml")
        assert config == SolverConfig()

    def test_load_yaml(self, tmp_path):
        """测试读取 YAML"""
        path = tmp_path / "solver.yaml"
        path.write_text("optimizer:\n  multistart: 2\ngrid:\n  p: 5\nworkers: 3\n", encoding="utf-8")
        config = load_solver_config(path)
        assert config.optimizer.multistart == 2
        assert config.grid.p == 5
        assert config.workers == 3

    def test_empty_file(self, tmp_path):
        """测试空文件等同默认配置"""
        path = tmp_path / "solver.yaml"
        path.write_text("", encoding="utf-8")
        assert load_solver_config(path) == SolverConfig()

    def test_bad_yaml(self, tmp_path):
        """测试 YAML 语法错误"""
        path = tmp_path / "solver.yaml"
        path.write_text("optimizer: [unclosed\n", encoding="utf-8")
        with pytest.raises(ValueError):
            load_solver_config(path)

    def test_top_level_must_be_mapping(self, tmp_path):
        """测试顶层不是映射"""
        path = tmp_path / "solver.yaml"
        path.write_text("- 1\n- 2\n", encoding="utf-8")
        with pytest.raises(ValueError):
            load_solver_config(path)

    def test_reload(self, tmp_path):
        """测试重新加载"""
        path = tmp_path / "solver.yaml"
        path.write_text("optimizer:\n  seed: 1\n", encoding="utf-8")
        manager = SolverConfigManager(path)
        assert manager.load_config().optimizer.seed == 1
        path.write_text("optimizer:\n  seed: 2\n", encoding="utf-8")
        assert manager.load_config().optimizer.seed == 1
        assert manager.reload_config().optimizer.seed == 2


class TestSettings:
    """应用配置测试"""

    def test_resolve_workers(self):
        """测试并行进程数的解析顺序"""
        settings = Settings(CHARGENET_WORKERS=3)
        assert settings.resolve_workers(5) == 5
        assert settings.resolve_workers() == 3
        assert settings.resolve_workers(0) == 3

    def test_resolve_workers_default(self):
        """测试未配置时按 CPU 数量取值"""
        settings = Settings(CHARGENET_WORKERS=0)
        assert 1 <= settings.resolve_workers() <= 8

    def test_resolve_path(self, tmp_path):
        """测试绝对路径原样返回"""
        settings = Settings()
        assert settings.resolve_path(str(tmp_path)) == tmp_path
        assert settings.resolve_path("output").name == "output"
