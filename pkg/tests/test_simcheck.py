"""
离散事件仿真校核测试
"""
import numpy as np
import pytest

from src.model.exceptions import DomainError, UnstableQueueError
from src.model.scenario import ChargeStationSpec
from src.queues.charging import erlang_c_wait
from src.queues.swapping import swap_metrics
from src.simcheck.des import batch_means, des_mmV, des_swap


class TestBatchMeans:
    """批均值估计测试"""

    def test_constant_samples(self):
        """测试常数样本的置信区间为 0"""
        mean, halfwidth = batch_means(np.full(1000, 2.5))
        assert mean == pytest.approx(2.5)
        assert halfwidth == pytest.approx(0.0)

    def test_too_few_samples(self):
        """测试样本少于批数时区间为无穷"""
        mean, halfwidth = batch_means(np.array([1.0, 3.0]))
        assert mean == pytest.approx(2.0)
        assert np.isinf(halfwidth)


class TestChargingSimulation:
    """M/M/V 仿真测试"""

    def test_unstable_rejected(self):
        """测试利用率 >= 1"""
        with pytest.raises(UnstableQueueError):
            des_mmV(1.0, ChargeStationSpec(V=1, tau_c=1.0), n_arrivals=100_000)

    def test_minimum_arrivals(self):
        """测试到达数下限"""
        with pytest.raises(DomainError):
            des_mmV(0.5, ChargeStationSpec(V=1, tau_c=1.0), n_arrivals=1000)

    def test_deterministic_with_seed(self):
        """测试相同种子结果相同"""
        spec = ChargeStationSpec(V=2, tau_c=1.0)
        first = des_mmV(1.0, spec, n_arrivals=100_000, seed=3)
        second = des_mmV(1.0, spec, n_arrivals=100_000, seed=3)
        assert first == second

    @pytest.mark.slow
    @pytest.mark.parametrize("V", [1, 5, 10])
    @pytest.mark.parametrize("rho", [0.3, 0.6, 0.9])
    def test_matches_erlang_c(self, V, rho):
        """测试 10^6 次到达时与 Erlang C 相差不超过 3%（抽样误差更大时放宽到两倍置信区间半宽）"""
        spec = ChargeStationSpec(V=V, tau_c=1.0)
        lam = rho * V / spec.tau_c
        simulated = des_mmV(lam, spec, n_arrivals=1_000_000, seed=0)
        analytic = erlang_c_wait(lam, spec).wait
        assert abs(simulated.mean_wait - analytic) <= max(0.03 * analytic, 2.0 * simulated.ci_halfwidth)


class TestSwapSimulation:
    """换电站仿真测试"""

    def test_non_positive_rate(self, swap_spec):
        """测试到达率必须为正"""
        with pytest.raises(DomainError):
            des_swap(0.0, swap_spec, 1.0, n_arrivals=100_000)

    def test_empty_limit(self, swap_spec):
        """测试到达率很低时不等待、不阻塞"""
        result = des_swap(1e-3, swap_spec, 1.0, n_arrivals=100_000, seed=1)
        assert result.mean_wait < 1e-3
        assert result.block_rate == 0.0

    def test_saturation(self, swap_spec):
        """测试到达率远超换电能力时几乎全部阻塞"""
        result = des_swap(5000.0, swap_spec, 1.0, n_arrivals=100_000, seed=1)
        assert result.block_rate >= 0.99

    def test_deterministic_with_seed(self, swap_spec):
        """测试相同种子结果相同"""
        first = des_swap(6.0, swap_spec, 1.0, n_arrivals=100_000, seed=5)
        second = des_swap(6.0, swap_spec, 1.0, n_arrivals=100_000, seed=5)
        assert first == second

    @pytest.mark.slow
    @pytest.mark.parametrize("lam", [2.0, 10.0, 20.0, 30.0])
    def test_matches_embedded_chain(self, swap_spec, lam):
        """测试 10^6 次到达时与嵌入链一致：等待相差不超过 max(5%, 0.05 分钟)，阻塞相差不超过 0.01"""
        simulated = des_swap(lam, swap_spec, 1.0, n_arrivals=1_000_000, seed=0)
        analytic = swap_metrics(lam, swap_spec, 1.0)
        wait_tol = max(0.05 * analytic.wait, 0.05 / 60.0)
        assert abs(simulated.mean_wait - analytic.wait) <= wait_tol
        assert abs(simulated.block_rate - analytic.block) <= 0.01


class TestConfidenceInterval:
    """置信区间随样本量收缩的测试"""

    @pytest.mark.slow
    def test_halfwidth_shrinks_with_arrivals(self):
        """测试到达数加倍时置信区间半宽约缩小为 1/√2（相差不超过 20%）"""
        spec = ChargeStationSpec(V=2, tau_c=1.0)
        seeds = range(4)
        short = np.mean([des_mmV(1.0, spec, n_arrivals=200_000, seed=s).ci_halfwidth for s in seeds])
        long = np.mean([des_mmV(1.0, spec, n_arrivals=400_000, seed=s).ci_halfwidth for s in seeds])
        assert long / short == pytest.approx(1.0 / np.sqrt(2.0), rel=0.2)
