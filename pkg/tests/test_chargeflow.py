"""
电动车移动链与充电需求测试
"""
import numpy as np
import pytest

from src.chargeflow.chain import (
    demand_matrix,
    energy_balance_residual,
    ev_operating_time,
    feasibility_margin,
    power_iteration,
    solve_stationary,
    stationary_distribution,
    total_charging_rate,
    transition_matrix,
)
from src.model.exceptions import DomainError, InfeasibleError, ReducibleChainError


class TestDemandMatrix:
    """EV 流量矩阵测试"""

    def test_idle_fleet(self):
        """测试没有需求时 D 为对角阵"""
        D, R = demand_matrix([2.0, 3.0], [2.0, 1.0], np.zeros((2, 2)), np.zeros((2, 2)),
                             np.zeros(2), np.full((2, 2), 0.2))
        np.testing.assert_allclose(D, np.diag([2.0, 3.0]))
        np.testing.assert_allclose(R, [0.5, 0.75])

    def test_hand_evaluated(self):
        """测试手算的两区域例子"""
        lam = np.array([[0.0, 10.0], [0.0, 0.0]])
        tau = np.array([[0.2, 0.2], [0.2, 0.2]])
        D, R = demand_matrix([1.0, 1.0], [1.0, 1.0], lam, np.zeros((2, 2)), np.zeros(2), tau)
        np.testing.assert_allclose(R, [0.5, 0.5])
        np.testing.assert_allclose(D, [[1.0, 1.0], [0.0, 1.0]])

    def test_gasoline_free_limit(self):
        """测试燃油车趋于 0 时 R 趋于 1"""
        _, R = demand_matrix([4.0, 4.0], [1e-9, 1e-9], np.ones((2, 2)), np.zeros((2, 2)),
                             np.full(2, 0.1), np.full((2, 2), 0.2))
        np.testing.assert_allclose(R, [1.0, 1.0], atol=1e-9)

    def test_requires_idle_ev(self):
        """测试空闲电动车必须为正"""
        with pytest.raises(DomainError):
            demand_matrix([0.0, 1.0], [1.0, 1.0], np.ones((2, 2)), np.zeros((2, 2)),
                          np.zeros(2), np.ones((2, 2)))


class TestTransitionMatrix:
    """转移矩阵测试"""

    def test_row_normalization(self):
        """测试行归一化"""
        np.testing.assert_allclose(transition_matrix([[1.0, 1.0], [1.0, 1.0]]), [[0.5, 0.5], [0.5, 0.5]])
        np.testing.assert_allclose(transition_matrix([[9.0, 1.0], [5.0, 5.0]]), [[0.9, 0.1], [0.5, 0.5]])

    def test_rows_sum_to_one(self):
        """测试任意正矩阵的行和为 1"""
        D = np.random.default_rng(0).uniform(0.1, 5.0, (6, 6))
        np.testing.assert_allclose(transition_matrix(D).sum(axis=1), np.ones(6), atol=1e-12)

    def test_zero_row(self):
        """测试行和为零"""
        with pytest.raises(DomainError):
            transition_matrix([[0.0, 0.0], [1.0, 1.0]])


class TestStationaryDistribution:
    """平稳分布测试"""

    def test_symmetric(self):
        """测试对称双随机矩阵"""
        np.testing.assert_allclose(stationary_distribution([[0.5, 0.5], [0.5, 0.5]]), [0.5, 0.5])

    def test_two_state_closed_form(self):
        """测试两状态链的解析解"""
        np.testing.assert_allclose(stationary_distribution([[0.9, 0.1], [0.5, 0.5]]), [5 / 6, 1 / 6], atol=1e-12)

    def test_matches_power_iteration(self):
        """测试与幂迭代一致"""
        D = np.random.default_rng(11).uniform(0.1, 1.0, (6, 6))
        P = transition_matrix(D)
        n = stationary_distribution(P)
        np.testing.assert_allclose(n, power_iteration(P, steps=10_000), atol=1e-8)
        np.testing.assert_allclose(n @ P, n, atol=1e-12)
        assert n.sum() == pytest.approx(1.0)

    def test_irreducible_with_zeros(self):
        """测试非严格正但不可约的链仍可求解"""
        n = stationary_distribution([[0.0, 1.0], [1.0, 0.0]])
        np.testing.assert_allclose(n, [0.5, 0.5])

    def test_reducible(self):
        """测试可约链报错"""
        with pytest.raises(ReducibleChainError):
            stationary_distribution([[1.0, 0.0], [0.5, 0.5]])

    def test_batch_with_singular_member(self):
        """测试批中出现可约链时，其余成员照常求解、该成员取 NaN"""
        P = np.array([[[0.9, 0.1], [0.5, 0.5]], [[1.0, 0.0], [0.0, 1.0]]])
        n = solve_stationary(P)
        np.testing.assert_allclose(n[0], [5 / 6, 1 / 6], atol=1e-12)
        assert np.all(np.isnan(n[1]))


class TestChargingRate:
    """能量平衡测试"""

    def test_zero_access_time(self):
        """测试到站时间为 0 时 K = 运营时间/ℛ"""
        K = total_charging_rate([0.5, 0.5], [1.0, 1.0], [0.0, 0.0], [0.0, 0.0], 6.0, 60.0)
        assert K == pytest.approx(10.0)

    def test_with_access_time(self):
        """测试手算的可行裕度"""
        n = np.array([0.5, 0.5])
        r = np.array([1.0, 1.0])
        l_c = np.array([1.0, 1.0])
        assert feasibility_margin(n, r, l_c, np.full(2, np.nan), 6.0) == pytest.approx(5.0)
        assert total_charging_rate(n, r, l_c, np.full(2, np.nan), 6.0, 60.0) == pytest.approx(12.0)

    def test_non_positive_margin(self):
        """测试可行裕度不为正时不可行"""
        with pytest.raises(InfeasibleError) as exc_info:
            total_charging_rate([1.0, 0.0], [1.0, 1.0], [6.1, 6.1], [0.0, 0.0], 6.0, 60.0)
        assert exc_info.value.constraint == "feasibility_margin"

    def test_energy_balance_holds(self):
        """测试 k = nK 满足能量平衡"""
        n = np.array([0.3, 0.7])
        r = np.array([0.4, 1.0])
        l_c = np.array([0.1, 0.05])
        l_s = np.array([0.2, np.nan])
        K = total_charging_rate(n, r, l_c, l_s, 6.0, 42.0)
        assert energy_balance_residual(n * K, r, l_c, l_s, 6.0, 42.0) < 1e-12

    def test_operating_time_is_total_flow(self):
        """测试运营时间等于 D 的元素之和"""
        rng = np.random.default_rng(5)
        N_ve, N_vg = rng.uniform(1, 5, 3), rng.uniform(0, 5, 3)
        lam, f = rng.uniform(0, 10, (3, 3)), rng.uniform(0, 2, (3, 3))
        w_p, tau = rng.uniform(0.05, 0.2, 3), rng.uniform(0.1, 0.5, (3, 3))
        D, R = demand_matrix(N_ve, N_vg, lam, f, w_p, tau)
        assert ev_operating_time(N_ve, R, lam, f, w_p, tau) == pytest.approx(D.sum())
