"""
时间守恒、车队规模与利润测试
"""
import numpy as np
import pytest

from src.chargeflow.chain import energy_balance_residual
from src.config.solver_config import OptimizerOptions
from src.economics import (
    StageKernel,
    evaluate_state,
    ev_utilization,
    fleet_sizes,
    gasoline_state,
    profit,
)
from src.model.decisions import OperationalDecision
from src.model.exceptions import DomainError


def _ops(M=2, p=100.0, N_ve=5.0, N_vg=3.0, r=0.6, f=None) -> OperationalDecision:
    return OperationalDecision.from_arrays(
        M, p=np.full(M, p), N_ve=np.full(M, N_ve), N_vg=np.full(M, N_vg),
        f=np.zeros((M, M)) if f is None else f, r=np.broadcast_to(r, (M,)),
    )


class TestFleetSizes:
    """车队规模测试"""

    def test_idle_fleet(self, smoke_scenario):
        """测试没有需求时车队规模等于空闲车辆"""
        ops = _ops(N_ve=2.0, N_vg=1.0)
        zeros = np.zeros(2)
        nan = np.full(2, np.nan)
        N_e, N_g = fleet_sizes(ops, np.zeros((2, 2)), np.full(2, 0.1), zeros, nan, zeros, nan, zeros, smoke_scenario)
        assert N_e == pytest.approx(4.0)
        assert N_g == pytest.approx(2.0)

    def test_hand_evaluated(self, smoke_scenario):
        """测试手算的两区域例子"""
        ops = _ops(N_ve=2.0, N_vg=2.0, r=1.0)
        lam = np.array([[10.0, 0.0], [0.0, 0.0]])
        w_p = np.array([0.1, 0.1])
        # 区域 0 的占用时间 10×0.1 + 10×0.15 = 2.5，电动车占一半
        N_e, N_g = fleet_sizes(ops, lam, w_p, np.zeros(2), np.full(2, np.nan), np.zeros(2),
                               np.full(2, np.nan), np.zeros(2), smoke_scenario)
        assert N_e == pytest.approx(5.25)
        assert N_g == pytest.approx(5.25)

        k = np.array([1.0, 0.0])
        N_e, _ = fleet_sizes(ops, lam, w_p, k, np.array([0.1, np.nan]), np.array([0.2, 0.0]),
                             np.full(2, np.nan), np.zeros(2), smoke_scenario)
        assert N_e == pytest.approx(5.25 + 1.3)


class TestProfit:
    """利润与利用率测试"""

    def test_profit_value(self, smoke_scenario):
        """测试收入减去车队成本"""
        lam = np.array([[10.0, 0.0], [0.0, 0.0]])
        value = profit([100.0, 100.0], lam, smoke_scenario.trip_time, 1.0, 1.0, smoke_scenario)
        assert value == pytest.approx(150.0 - 20.0 - 30.0)

    def test_utilization_without_charging(self, smoke_scenario):
        """测试没有补能需求时利用率为 1"""
        nan = np.full(2, np.nan)
        rho = ev_utilization(np.zeros(2), np.ones(2), nan, np.zeros(2), nan, np.zeros(2), 3.0, smoke_scenario)
        assert rho == pytest.approx(1.0)

    def test_utilization_value(self, smoke_scenario):
        """测试补能占用降低利用率"""
        rho = ev_utilization(np.array([1.0, 0.0]), np.ones(2), np.array([0.1, np.nan]), np.array([0.2, 0.0]),
                             np.full(2, np.nan), np.zeros(2), 6.55, smoke_scenario)
        assert rho == pytest.approx(1.0 - 1.3 / 6.55)

    def test_utilization_requires_fleet(self, smoke_scenario):
        """测试车队规模为 0"""
        with pytest.raises(DomainError):
            ev_utilization(np.zeros(2), np.ones(2), np.zeros(2), np.zeros(2), np.zeros(2), np.zeros(2),
                           0.0, smoke_scenario)


class TestEvaluateState:
    """市场状态评估测试"""

    def test_conservation(self, smoke_scenario):
        """测试时间守恒与能量平衡"""
        sc = smoke_scenario
        ops = _ops(r=np.array([0.6, 0.4]))
        state = evaluate_state([2.0, 3.0], [1.0, 2.0], ops, sc)

        assert state.N_e == pytest.approx(state.ev_operating_time + state.downtime)
        N_e, N_g = fleet_sizes(ops, state.lam, state.w_p, state.k, state.l_c, state.w_c,
                               state.l_s, state.w_s, sc)
        assert state.N_e == pytest.approx(N_e)
        assert state.N_g == pytest.approx(N_g)
        np.testing.assert_allclose(state.k, state.n * state.K)
        np.testing.assert_allclose(state.n @ state.P, state.n, atol=1e-12)
        assert energy_balance_residual(state.k, ops.r, state.l_c, state.l_s, sc.battery_range_hours,
                                       state.ev_operating_time) < 1e-9
        assert state.profit == pytest.approx(state.revenue - sc.gamma_g * state.N_g - sc.gamma_e * state.N_e)
        assert 0.0 < state.rho_ev < 1.0
        assert state.margin > 0

    def test_split_moves_waits(self, smoke_scenario):
        """测试提高充电比例使充电等待变长、换电等待变短"""
        low = evaluate_state([2.0, 3.0], [0.2, 0.2], _ops(r=0.3), smoke_scenario)
        high = evaluate_state([2.0, 3.0], [0.2, 0.2], _ops(r=0.7), smoke_scenario)
        assert np.all(high.w_c > low.w_c)
        assert np.all(high.w_s < low.w_s)

    def test_charging_only(self, smoke_scenario):
        """测试只有充电站时换电等待为 0"""
        state = evaluate_state([2.0, 3.0], [0.0, 0.0], _ops(r=1.0), smoke_scenario)
        np.testing.assert_allclose(state.w_s, [0.0, 0.0])
        assert np.all(np.isnan(state.l_s))
        assert state.to_dict()["l_s"] == [None, None]

    def test_charging_only_utilization_ceiling(self, smoke_scenario):
        """测试充电站充足时利用率趋于 续航/(续航+充电时长)"""
        sc = smoke_scenario
        state = evaluate_state([1e3, 1e3], [0.0, 0.0], _ops(r=1.0), sc)
        ceiling = sc.battery_range_hours / (sc.battery_range_hours + sc.charge_spec.tau_c)
        assert state.rho_ev < ceiling
        assert state.rho_ev == pytest.approx(ceiling, rel=1e-2)

    def test_flow_to_missing_charger(self, smoke_scenario):
        """测试没有充电站却分配了充电需求"""
        with pytest.raises(DomainError):
            evaluate_state([0.0, 3.0], [1.0, 1.0], _ops(r=0.5), smoke_scenario)

    def test_flow_to_missing_swap_station(self, smoke_scenario):
        """测试没有换电站却分配了换电需求"""
        with pytest.raises(DomainError):
            evaluate_state([2.0, 3.0], [0.0, 0.0], _ops(r=0.9), smoke_scenario)

    def test_gasoline_only(self, smoke_scenario):
        """测试无电动车阶段"""
        sc = smoke_scenario
        ops = _ops(N_ve=0.0, N_vg=4.0)
        state = gasoline_state(ops, sc)
        assert state.N_e == 0.0
        assert not state.ev_active
        busy = (state.lam * state.w_p[:, None] + state.lam * sc.trip_time).sum()
        assert state.N_g == pytest.approx(8.0 + busy)
        assert state.profit == pytest.approx(state.revenue - sc.gamma_g * state.N_g)


class TestStageKernel:
    """批量评估内核测试"""

    def test_matches_evaluate_state(self, smoke_scenario, swap_table):
        """测试内核与逐项评估结果一致"""
        sc = smoke_scenario
        ops = _ops(r=np.array([0.6, 0.4]), f=np.array([[0.0, 1.0], [0.5, 0.0]]))
        xt_c, xt_s = np.array([2.0, 3.0]), np.array([1.0, 2.0])
        state = evaluate_state(xt_c, xt_s, ops, sc, swap_table=swap_table)

        kernel = StageKernel(sc, OptimizerOptions(), swap_table)
        out = kernel.evaluate(xt_c[None], xt_s[None], ops.p[None], ops.N_ve[None], ops.N_vg[None],
                              ops.f[None], ops.r[None])
        assert out.profit[0] == pytest.approx(state.profit, rel=1e-9)
        assert out.N_e[0] == pytest.approx(state.N_e, rel=1e-9)
        np.testing.assert_allclose(out.k[0], state.k, rtol=1e-9)
        np.testing.assert_allclose(out.w_s[0], state.w_s, rtol=1e-9)

    def test_reformulated_residuals_vanish(self, smoke_scenario, swap_table):
        """测试以均衡 k 作为决策时链与能量残差为 0"""
        sc = smoke_scenario
        ops = _ops(r=np.array([0.6, 0.4]))
        xt_c, xt_s = np.array([2.0, 3.0]), np.array([1.0, 2.0])
        state = evaluate_state(xt_c, xt_s, ops, sc, swap_table=swap_table)

        kernel = StageKernel(sc, OptimizerOptions(), swap_table)
        out = kernel.evaluate(xt_c[None], xt_s[None], ops.p[None], ops.N_ve[None], ops.N_vg[None],
                              ops.f[None], ops.r[None], k=state.k[None])
        assert np.abs(out.h_chain).max() < 1e-9
        assert abs(out.h_energy[0]) < 1e-9
        assert out.profit[0] == pytest.approx(state.profit, rel=1e-9)

    def test_batch_rows_independent(self, smoke_scenario, swap_table):
        """测试批内各行互不影响"""
        sc = smoke_scenario
        kernel = StageKernel(sc, OptimizerOptions(), swap_table)
        xc = np.array([[2.0, 3.0], [1.0, 1.0]])
        xs = np.array([[1.0, 2.0], [0.5, 0.5]])
        p = np.array([[100.0, 100.0], [80.0, 120.0]])
        N_ve = np.array([[5.0, 5.0], [4.0, 6.0]])
        N_vg = np.array([[3.0, 3.0], [2.0, 2.0]])
        f = np.zeros((2, 2, 2))
        r = np.array([[0.6, 0.4], [0.5, 0.5]])
        both = kernel.evaluate(xc, xs, p, N_ve, N_vg, f, r)
        single = kernel.evaluate(xc[1:], xs[1:], p[1:], N_ve[1:], N_vg[1:], f[1:], r[1:])
        assert both.profit[1] == pytest.approx(single.profit[0], rel=1e-12)

    def test_gasoline_only_kernel(self, smoke_scenario):
        """测试无电动车阶段的内核与 gasoline_state 一致"""
        sc = smoke_scenario
        ops = _ops(N_ve=0.0, N_vg=4.0)
        kernel = StageKernel(sc, OptimizerOptions(), None, ev_active=False)
        out = kernel.evaluate(np.zeros((1, 2)), np.zeros((1, 2)), ops.p[None], ops.N_ve[None], ops.N_vg[None],
                              ops.f[None], ops.r[None])
        assert out.profit[0] == pytest.approx(gasoline_state(ops, sc).profit, rel=1e-12)
        assert out.N_e[0] == 0.0
