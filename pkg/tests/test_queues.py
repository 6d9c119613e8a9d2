"""
排队模型测试：充电站 Erlang C、换电站嵌入链、插值表与凸性探针
"""
import numpy as np
import pytest

from src.model.exceptions import DomainError, UnstableQueueError
from src.model.scenario import ChargeStationSpec, SwapStationSpec
from src.queues.charging import access_time, erlang_c_terms, erlang_c_wait
from src.queues.probe import convexity_probe, probe_flags
from src.queues.swapping import (
    STATE_BUDGET,
    SwapWaitTable,
    arrival_pmf,
    default_substeps,
    swap_chain_build,
    swap_equilibrium,
    swap_metrics,
    swap_wait,
    state_count,
)


class TestAccessTime:
    """到设施时间测试"""

    def test_square_root(self):
        """测试 ψ/√x̃"""
        assert access_time(4, 0.1) == pytest.approx(0.05)
        assert access_time(1, 0.1) == pytest.approx(0.1)

    def test_no_station(self):
        """测试没有设施"""
        with pytest.raises(DomainError):
            access_time(0, 0.1)


class TestErlangC:
    """充电站排队测试"""

    def test_mm1_closed_form(self):
        """测试单桩退化为 M/M/1：Wq = ρ/(μ−λ)"""
        metrics = erlang_c_wait(0.5, ChargeStationSpec(V=1, tau_c=1.0))
        assert metrics.wait == pytest.approx(1.0)
        assert metrics.utilization == pytest.approx(0.5)
        assert metrics.empty_prob == pytest.approx(0.5)

    def test_two_chargers(self):
        """测试两桩的手算值"""
        metrics = erlang_c_wait(1.0, ChargeStationSpec(V=2, tau_c=1.0))
        assert metrics.wait == pytest.approx(1.0 / 3.0)
        assert metrics.L == pytest.approx(1.0 * (1.0 / 3.0 + 1.0))

    def test_unstable(self):
        """测试利用率超过 1"""
        with pytest.raises(UnstableQueueError) as exc_info:
            erlang_c_wait(10.001, ChargeStationSpec(V=10, tau_c=1.0))
        assert exc_info.value.rho > 1.0

    def test_vectorized_terms(self):
        """测试向量化版本在不稳定点返回 inf"""
        _, empty, wait = erlang_c_terms(np.array([0.5, 1.5]), 1, 1.0)
        assert wait[0] == pytest.approx(1.0)
        assert np.isinf(wait[1])
        assert empty[1] == 0.0

    def test_vanishing_wait(self, charge_spec):
        """测试设施很多时等待时间趋于 0"""
        assert erlang_c_wait(10.0 / 1000.0, charge_spec).wait < 1e-12


class TestSwapChain:
    """换电站嵌入链测试"""

    def test_transition_rows_sum_to_one(self, swap_spec):
        """测试以 τ_s 为间隔的链行和为 1，状态为 (i, j)"""
        chain = swap_chain_build(10.0, swap_spec, 1.0, substeps=1)
        row_sums = np.asarray(chain.transition.sum(axis=1)).ravel()
        np.testing.assert_allclose(row_sums, np.ones(chain.n_states), atol=1e-10)
        assert chain.n_states == (swap_spec.W + 1) * (swap_spec.B + 1)

    def test_refined_rows_sum_to_one(self, swap_spec):
        """测试细分后的链行和为 1，状态数与计数公式一致"""
        chain = swap_chain_build(10.0, swap_spec, 1.0, substeps=4)
        row_sums = np.asarray(chain.transition.sum(axis=1)).ravel()
        np.testing.assert_allclose(row_sums, np.ones(chain.n_states), atol=1e-10)
        assert chain.n_states == state_count(swap_spec, 4)
        assert chain.G.shape == (swap_spec.W + 1, swap_spec.B + 1)

    def test_default_substeps_within_budget(self, swap_spec):
        """测试默认细分数不超过状态数上限"""
        m = default_substeps(swap_spec)
        assert m == 6
        assert state_count(swap_spec, m) <= STATE_BUDGET
        big = SwapStationSpec(S=4, C=10, B=20, W=100, tau_s=1.0 / 12.0)
        assert state_count(big, default_substeps(big)) <= STATE_BUDGET

    def test_no_departure_without_vehicles(self, swap_spec):
        """测试状态 (0, B) 只有到达，转移概率等于到达分布"""
        lam = 10.0
        chain = swap_chain_build(lam, swap_spec, 1.0, substeps=1)
        B = swap_spec.B
        row = chain.transition.getrow(0 * (B + 1) + B).toarray().ravel().reshape(swap_spec.W + 1, B + 1)
        g = arrival_pmf(lam, swap_spec)
        np.testing.assert_allclose(row[:-1, B], g[:-1], atol=1e-15)
        assert row[:, :B].sum() == pytest.approx(0.0, abs=1e-15)

    def test_equilibrium_is_distribution(self, swap_spec):
        """测试平稳分布非负且归一"""
        chain = swap_chain_build(6.0, swap_spec, 1.0)
        assert np.all(chain.G >= 0)
        assert chain.G.sum() == pytest.approx(1.0)
        assert chain.stationary.sum() == pytest.approx(1.0)
        assert 0.0 <= chain.block <= 1.0

    def test_power_iteration_agrees(self, swap_spec):
        """测试幂迭代与直接解一致"""
        chain = swap_chain_build(6.0, swap_spec, 1.0, substeps=1)
        initial = np.full(chain.n_states, 1.0 / chain.n_states)
        iterated = swap_equilibrium(chain.transition, initial, method="power").reshape(chain.G.shape)
        np.testing.assert_allclose(iterated, chain.G, atol=1e-8)

    def test_empty_limit(self, swap_spec):
        """测试到达率很低时几乎不等待、不阻塞"""
        metrics = swap_metrics(1e-3, swap_spec, 1.0)
        assert metrics.wait < 1e-3
        assert metrics.block < 1e-6

    def test_vanishing_wait(self, swap_spec):
        """测试换电站很多（x = 10³）时等待时间趋于 0"""
        assert swap_metrics(10.0 / 1000.0, swap_spec, 1.0).wait < 1e-4

    def test_saturation_limit(self, swap_spec):
        """测试到达率很高时几乎全部阻塞"""
        metrics = swap_metrics(1e3, swap_spec, 1.0)
        assert metrics.block >= 0.99

    def test_zero_arrivals(self, swap_spec):
        """测试到达率为 0 时返回空系统"""
        metrics = swap_metrics(0.0, swap_spec, 1.0)
        assert metrics.wait == 0.0
        assert metrics.empty_prob == 1.0

    def test_wait_from_little_law(self, swap_spec):
        """测试等待时间由完成率与 Little 法则得到"""
        chain = swap_chain_build(8.0, swap_spec, 1.0)
        metrics = swap_wait(chain)
        assert metrics.wait == pytest.approx(max(chain.L / chain.throughput - swap_spec.tau_s, 0.0))
        assert metrics.block == pytest.approx(1.0 - chain.throughput / 8.0)
        assert chain.throughput <= 8.0 * (1.0 + 1e-9)

    def test_throughput_capped_by_batteries(self, swap_spec):
        """测试过载时完成率不超过换电位能力，并受电池周转限制"""
        chain = swap_chain_build(30.0, swap_spec, 1.0)
        assert chain.throughput < swap_spec.service_rate
        assert chain.block == pytest.approx(1.0 - chain.throughput / 30.0)
        assert chain.L > 0.9 * swap_spec.W

    def test_refinement_converges(self, swap_spec):
        """测试细分数增大时阻塞概率的变化逐步缩小"""
        blocks = [swap_chain_build(10.0, swap_spec, 1.0, substeps=m).block for m in (2, 4, 8)]
        assert abs(blocks[2] - blocks[1]) < abs(blocks[1] - blocks[0])

    def test_metrics_cached_copy(self, swap_spec):
        """测试直接求解结果按参数缓存，返回的是副本"""
        first = swap_metrics(4.0, swap_spec, 1.0)
        first.wait = -1.0
        assert swap_metrics(4.0, swap_spec, 1.0).wait >= 0.0


class TestSwapWaitTable:
    """换电等待时间插值表测试"""

    def test_matches_direct_solution(self, swap_table, swap_spec):
        """测试网格点上与直接求解一致"""
        for lam in (2.01, 6.01, 10.01):
            direct = swap_metrics(lam, swap_spec, 1.0)
            assert float(swap_table.wait(lam)) == pytest.approx(direct.wait, rel=1e-6, abs=1e-9)
            assert float(swap_table.block(lam)) == pytest.approx(direct.block, rel=1e-6, abs=1e-9)

    def test_monotone(self, swap_table):
        """测试插值结果单调非减"""
        grid = np.linspace(0.0, swap_table.upper, 400)
        assert np.all(np.diff(swap_table.wait(grid)) >= -1e-12)

    def test_clamped_above(self, swap_table):
        """测试超出上端时取端点值"""
        assert float(swap_table.wait(10 * swap_table.upper)) == pytest.approx(float(swap_table.wait(swap_table.upper)))

    def test_save_and_load(self, swap_table, swap_spec, tmp_path):
        """测试保存后重新加载"""
        path = tmp_path / "table.npz"
        swap_table.save(path)
        loaded = SwapWaitTable.load(path, swap_spec, 1.0)
        np.testing.assert_array_equal(loaded.grid, swap_table.grid)
        assert float(loaded.wait(5.3)) == pytest.approx(float(swap_table.wait(5.3)))


class TestConvexityProbe:
    """等待时间凸性探针测试"""

    def test_charging_convex_and_decreasing(self, charge_spec, swap_spec):
        """测试充电站等待时间随设施数量递减且凸"""
        rows = convexity_probe("charging", 10.0, range(1, 21), charge_spec, swap_spec)
        flags = probe_flags(rows)
        assert flags["convex_flags"] == 0
        assert flags["monotone_flags"] == 0
        waits = [row.wait for row in rows if row.stable]
        assert all(b <= a for a, b in zip(waits, waits[1:]))
        assert all(row.second_difference >= -1e-6 for row in rows if row.second_difference is not None)

    def test_swapping_convex_and_decreasing(self, charge_spec, swap_spec):
        """测试换电站等待时间随设施数量递减且凸"""
        rows = convexity_probe("swapping", 10.0, range(1, 21), charge_spec, swap_spec)
        flags = probe_flags(rows)
        assert flags["convex_flags"] == 0
        assert flags["monotone_flags"] == 0

    def test_swapping_wait_vanishes_with_many_stations(self, charge_spec, swap_spec):
        """测试换电站数量增至 10³ 时单站等待时间趋于 0"""
        rows = convexity_probe("swapping", 10.0, [10.0, 100.0, 1000.0], charge_spec, swap_spec)
        waits = [row.wait for row in rows]
        assert all(b <= a + 1e-12 for a, b in zip(waits, waits[1:]))
        assert rows[-1].arrival_rate == pytest.approx(0.01)
        assert waits[-1] < 1e-4

    def test_single_point(self, charge_spec, swap_spec):
        """测试只有一个点时没有差分"""
        rows = convexity_probe("charging", 10.0, [1.0], charge_spec, swap_spec)
        assert len(rows) == 1
        assert rows[0].first_difference is None
        assert rows[0].second_difference is None

    def test_unstable_points_reported(self, swap_spec):
        """测试不稳定点逐行报告"""
        rows = convexity_probe("charging", 10.0, [1.0, 2.0, 20.0], ChargeStationSpec(V=1, tau_c=1.0), swap_spec)
        assert [row.stable for row in rows] == [False, False, True]
        assert rows[0].wait is None
        assert probe_flags(rows)["unstable_points"] == 2

    def test_invalid_kind(self, charge_spec, swap_spec):
        """测试未知的队列类型"""
        with pytest.raises(DomainError):
            convexity_probe("parking", 10.0, [1.0], charge_spec, swap_spec)
