"""
单个（区域, 阶段）拉格朗日子问题

固定 ȳ = (p, N_ve, N_vg, r, k, f̃) 后，L_{i,t} 对 x̄ = (x̃^c, x̃^s, f_i·) 可分：
f 只通过 f̃ 与 Σ θ_m f_im τ_im 出现（线性规划，取系数最大的一列），
x̃^c 与 x̃^s 各是一维凹问题。对 ȳ 做网格搜索，一维问题用对数网格扫描加黄金分割求解，
最后在网格范围内做一次 L-BFGS-B 连续精修，并与锚点处的取值比较。
"""
from dataclasses import dataclass, field, replace
from typing import Any, Callable, Dict, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import minimize

from src.bound.reformulation import Multipliers, zone_lagrangian, zone_market
from src.config.solver_config import BoxOptions, GridOptions
from src.model.scenario import Scenario
from src.queues.charging import erlang_c_terms
from src.queues.swapping import DirectSwapWait, SwapWaitTable

# 一维设施问题的对数扫描点数与黄金分割迭代次数
SCAN_POINTS = 48
GOLDEN_ITERS = 60
GOLDEN = (np.sqrt(5.0) - 1.0) / 2.0
# 换电站一维问题的下端（相对 x̂）
SWAP_FLOOR = 1e-6


@dataclass(frozen=True)
class ZonePoint:
    """子问题的一个可行点（x̃ 为累计数量）"""
    xt_c: float
    xt_s: float
    p: float
    N_ve: float
    N_vg: float
    f_row: np.ndarray
    r: float
    k: float

    def f_tilde(self, tau_row: np.ndarray) -> float:
        return float(np.dot(self.f_row, tau_row))

    def to_dict(self) -> Dict[str, Any]:
        return {
            "xt_c": self.xt_c, "xt_s": self.xt_s, "p": self.p, "N_ve": self.N_ve,
            "N_vg": self.N_vg, "f": np.asarray(self.f_row).tolist(), "r": self.r, "k": self.k,
        }


@dataclass(frozen=True)
class ZoneGrid:
    """ȳ 各维度的网格点"""
    p: np.ndarray
    n_ve: np.ndarray
    n_vg: np.ndarray
    r: np.ndarray
    k: np.ndarray
    f_tilde: np.ndarray

    @property
    def size(self) -> int:
        return int(self.p.size * self.n_ve.size * self.n_vg.size * self.r.size * self.k.size * self.f_tilde.size)

    def bounds(self):
        return [(float(axis.min()), float(axis.max()))
                for axis in (self.p, self.n_ve, self.n_vg, self.f_tilde, self.r, self.k)]


def _axis(anchors: Sequence[float], n: int, slab: Sequence[float], floor: float,
          ceiling: float, fallback: float) -> np.ndarray:
    """
    以第一个锚点为中心的几何网格（锚点接近 0 时用 [floor, fallback] 上的等距网格），并插入全部锚点

    n 个点的网格加倍为 2n−1 个点时，原网格点保持不变。
    """
    center = float(anchors[0])
    if center > max(floor, 1e-9) * 10.0:
        lo = max(center * slab[0], floor)
        hi = min(center * slab[1], ceiling)
        axis = np.geomspace(lo, hi, n) if lo > 0 else np.linspace(lo, hi, n)
    else:
        axis = np.linspace(floor, max(fallback, floor + 1e-6), n)
    extra = np.clip(np.asarray(anchors, dtype=float), floor, ceiling)
    return np.unique(np.concatenate([axis, extra]))


def build_zone_grid(scenario: Scenario, zone: int, anchors: Sequence[ZonePoint], options: GridOptions,
                    boxes: BoxOptions, eps: float, ev_active: bool, allow_c: bool, allow_s: bool) -> ZoneGrid:
    """
    由锚点构造 ȳ 网格

    Args:
        scenario: 场景
        zone: 区域
        anchors: 锚点（第一个为网格中心，通常是下界解）
        options: 网格分辨率与缩放范围
        boxes: 盒约束
        eps: 严格正变量的下限
        ev_active: 该阶段是否有电动车
        allow_c, allow_s: 该区域允许的设施类型

    Returns:
        ZoneGrid
    """
    slab = options.slab
    tau = scenario.trip_time[zone]
    p_max = boxes.price_max_factor * scenario.outside_price
    p = _axis([a.p for a in anchors], options.p, slab, 0.0, p_max, p_max)
    f_anchor = [a.f_tilde(tau) for a in anchors]
    busy_guess = float((scenario.base_demand[zone] * tau).sum())
    f_tilde = _axis(f_anchor, options.f_tilde, slab, 0.0, boxes.flow_max * float(tau.sum()),
                    0.25 * busy_guess)
    f_tilde = np.unique(np.concatenate([[0.0], f_tilde]))

    if not ev_active:
        n_vg = _axis([a.N_vg for a in anchors], options.n_vg, slab, eps, boxes.idle_max, boxes.idle_max)
        return ZoneGrid(p=p, n_ve=np.zeros(1), n_vg=n_vg, r=np.ones(1), k=np.zeros(1), f_tilde=f_tilde)

    n_ve = _axis([a.N_ve for a in anchors], options.n_ve, slab, eps, boxes.idle_max, boxes.idle_max)
    ve_center = float(anchors[0].N_ve)
    n_vg = _axis([a.N_vg for a in anchors], options.n_vg, slab, 0.0, boxes.idle_max,
                 max(1.0, ve_center * slab[1]))
    n_vg = np.unique(np.concatenate([[0.0], n_vg]))
    k_grid = _axis([a.k for a in anchors], options.k, slab, eps, boxes.idle_max, boxes.idle_max)
    if allow_c and allow_s:
        r = np.unique(np.concatenate([np.linspace(0.0, 1.0, options.r), [a.r for a in anchors]]))
    else:
        r = np.ones(1) if allow_c else np.zeros(1)
    return ZoneGrid(p=p, n_ve=n_ve, n_vg=n_vg, r=r, k=k_grid, f_tilde=f_tilde)


@dataclass(frozen=True)
class SubproblemInstance:
    """一个（区域, 阶段）子问题的全部输入"""
    scenario: Scenario
    stage: int
    zone: int
    weight: float
    multipliers: Multipliers
    anchors: Tuple[ZonePoint, ...]
    grid_options: GridOptions
    boxes: BoxOptions
    eps: float
    ev_active: bool
    allow_c: bool
    allow_s: bool
    swap_table: Optional[SwapWaitTable] = field(default=None, compare=False)

    @property
    def key(self) -> Tuple[int, int]:
        return self.stage, self.zone

    @property
    def kappa(self) -> Tuple[float, float]:
        """x̃^c、x̃^s 的线性系数 η_t − η_{t+1} − μ_t a"""
        sc = self.scenario
        mult = self.multipliers
        eta = mult.eta[self.stage, self.zone]
        eta_next = mult.eta_next(self.stage)[self.zone]
        mu = mult.mu[self.stage]
        return (float(eta[0] - eta_next[0] - mu * sc.cost_c),
                float(eta[1] - eta_next[1] - mu * sc.cost_s))

    @property
    def theta(self) -> np.ndarray:
        return self.multipliers.theta[self.stage]

    def grid(self) -> ZoneGrid:
        return build_zone_grid(self.scenario, self.zone, self.anchors, self.grid_options, self.boxes,
                               self.eps, self.ev_active, self.allow_c, self.allow_s)

    def doubled(self) -> "SubproblemInstance":
        """各维度分辨率加倍（原网格点保留）"""
        return replace(self, grid_options=self.grid_options.doubled())


@dataclass
class SubproblemResult:
    """子问题的解"""
    stage: int
    zone: int
    value: float
    point: ZonePoint
    grid_value: float
    polish_value: float
    anchor_value: float
    source: str
    grid_size: int
    # 网格粗糙度余量，单独报告，不计入 value
    margin: float = 0.0

    def to_dict(self) -> Dict[str, Any]:
        return {
            "stage": self.stage + 1,
            "zone": self.zone,
            "value": self.value,
            "grid_value": self.grid_value,
            "polish_value": self.polish_value,
            "anchor_value": self.anchor_value,
            "source": self.source,
            "grid_size": self.grid_size,
            "margin": self.margin,
            "argmax": self.point.to_dict(),
        }


def station_value(q, kappa: float, access_coef: float, wait_coef: float, cap: float, psi: float,
                  wait: Callable[[np.ndarray], np.ndarray], lower: Callable[[np.ndarray], np.ndarray]):
    """
    一维设施问题 max_{x ∈ (lower(q), cap]} −a·q·ψ/√x − b·q·W(q/x) + κ·x

    Args:
        q: 需求数组（辆/小时）
        kappa: 线性系数 κ
        access_coef: 到站时间系数 a
        wait_coef: 等待时间系数 b
        cap: 设施数量上限 x̂
        psi: 到站时间常数
        wait: 到达率 → 等待时间
        lower: 需求 → 可行域下端

    Returns:
        (最优值, 最优 x)；可行域为空时最优值为 −inf
    """
    q = np.atleast_1d(np.asarray(q, dtype=float))
    value = np.full(q.shape, -np.inf)
    best_x = np.zeros(q.shape)

    idle = q <= 0
    value[idle] = max(0.0, kappa * cap)
    best_x[idle] = cap if kappa > 0 else 0.0
    busy = np.flatnonzero(~idle)
    if busy.size == 0 or cap <= 0:
        return value, best_x

    qb = q[busy]
    lo = lower(qb)
    ok = lo < cap
    if not ok.any():
        return value, best_x
    qb, lo, busy = qb[ok], lo[ok], busy[ok]

    def objective(x, qq):
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            out = -access_coef * qq * psi / np.sqrt(x) - wait_coef * qq * wait(qq / x) + kappa * x
        return np.where(np.isfinite(out), out, -np.inf)

    steps = np.linspace(0.0, 1.0, SCAN_POINTS)
    grid = lo[:, None] * (cap / lo)[:, None] ** steps[None, :]
    grid[:, -1] = cap
    scan = objective(grid, qb[:, None])
    j = np.argmax(scan, axis=1)
    rows = np.arange(qb.size)
    grid_best = scan[rows, j]
    grid_x = grid[rows, j]

    a = grid[rows, np.maximum(j - 1, 0)]
    b = grid[rows, np.minimum(j + 1, SCAN_POINTS - 1)]
    c = b - GOLDEN * (b - a)
    d = a + GOLDEN * (b - a)
    fc = objective(c, qb)
    fd = objective(d, qb)
    for _ in range(GOLDEN_ITERS):
        left = fc >= fd
        b = np.where(left, d, b)
        a = np.where(left, a, c)
        new_c = b - GOLDEN * (b - a)
        new_d = a + GOLDEN * (b - a)
        # 保留的内点直接复用
        c_next = np.where(left, new_c, d)
        d_next = np.where(left, c, new_d)
        fc_next = np.where(left, objective(new_c, qb), fd)
        fd_next = np.where(left, fc, objective(new_d, qb))
        c, d, fc, fd = c_next, d_next, fc_next, fd_next
    golden_x = np.where(fc >= fd, c, d)
    golden_best = np.maximum(fc, fd)

    use_golden = golden_best > grid_best
    value[busy] = np.where(use_golden, golden_best, grid_best)
    best_x[busy] = np.where(use_golden, golden_x, grid_x)
    return value, best_x


class _Separable:
    """固定乘子与网格后，子问题目标的向量化计算"""

    def __init__(self, inst: SubproblemInstance):
        self.inst = inst
        sc = inst.scenario
        self.sc = sc
        self.i = inst.zone
        self.M = sc.M
        self.tau = sc.trip_time[inst.zone]
        self.theta = inst.theta
        chain = self.theta[: self.M - 1]
        self.theta_plus = max(0.0, float(chain.max()))
        # f̃ 全部放在 θ 最大的一列；θ 全非正时放在最后一列（其链方程已删去）
        self.f_column = int(np.argmax(chain)) if self.theta_plus > 0 else self.M - 1
        self.theta_self = float(chain[self.i]) if self.i < self.M - 1 else 0.0
        self.kappa_c, self.kappa_s = inst.kappa
        cap = sc.cap
        self.cap_c = cap if inst.allow_c else 0.0
        self.cap_s = cap if inst.allow_s else 0.0

    def _charging_wait(self, lam):
        spec = self.sc.charge_spec
        return erlang_c_terms(lam, spec.V, spec.tau_c)[2]

    def _swap_wait(self, lam):
        table = self.inst.swap_table
        return table.wait(lam) if table is not None else np.zeros_like(lam)

    def facility_value(self, r: np.ndarray, k: np.ndarray):
        """
        Ē 部分：两类设施一维问题之和减去服务时间成本

        Args:
            r, k: 同形数组

        Returns:
            (值, x̃^c, x̃^s)
        """
        sc = self.sc
        delta = self.inst.weight
        theta_e = float(self.theta[self.M - 1]) if self.inst.ev_active else 0.0
        access = delta * sc.gamma_e + theta_e
        wait_coef = delta * sc.gamma_e
        spec_c = sc.charge_spec
        q_c = (r * k).ravel()
        q_s = ((1.0 - r) * k).ravel()
        v_c, x_c = station_value(
            q_c, self.kappa_c, access, wait_coef, self.cap_c, sc.psi, self._charging_wait,
            lambda q: q * spec_c.tau_c / spec_c.V * (1.0 + 1e-9),
        )
        v_s, x_s = station_value(
            q_s, self.kappa_s, access, wait_coef, self.cap_s, sc.psi, self._swap_wait,
            lambda q: np.full(q.shape, self.cap_s * SWAP_FLOOR),
        )
        service = wait_coef * (q_c * spec_c.tau_c + q_s * sc.swap_spec.tau_s)
        shape = np.shape(r * k)
        return (v_c + v_s - service).reshape(shape), x_c.reshape(shape), x_s.reshape(shape)

    def market_terms(self, p, n_ve, n_vg, f_tilde):
        """
        与 k、x̄ 无关的部分 base 以及 k 的系数 c

        p, n_ve, n_vg 同形 (Q,)，f_tilde 形如 (F,)；返回 (Q, F) 数组
        """
        sc = self.sc
        delta = self.inst.weight
        w_p, lam, revenue, operating, R = zone_market(sc, self.i, p, n_ve, n_vg)
        busy = operating[:, None] + f_tilde[None, :]
        ev_busy = n_ve[:, None] + R[:, None] * busy
        base = delta * (revenue[:, None] - sc.gamma_g * (n_vg[:, None] + (1.0 - R[:, None]) * busy)
                        - sc.gamma_e * ev_busy)
        if not self.inst.ev_active:
            return base, np.zeros_like(base)

        theta_e = float(self.theta[self.M - 1])
        base = base - theta_e * ev_busy
        D0 = R[:, None] * lam * self.tau
        D0[:, self.i] += n_ve + R * w_p * lam.sum(axis=-1)
        chain0 = D0[:, : self.M - 1] @ self.theta[: self.M - 1]
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = (chain0[:, None] + R[:, None] * f_tilde[None, :] * self.theta_plus) / ev_busy
        coef = ratio - self.theta_self + theta_e * sc.battery_range_hours
        return base, coef

    def point(self, p, n_ve, n_vg, f_tilde, r, k, x_c, x_s) -> ZonePoint:
        f_row = np.zeros(self.M)
        if f_tilde > 0:
            f_row[self.f_column] = f_tilde / self.tau[self.f_column]
        return ZonePoint(xt_c=float(x_c), xt_s=float(x_s), p=float(p), N_ve=float(n_ve),
                         N_vg=float(n_vg), f_row=f_row, r=float(r), k=float(k))

    def lattice(self, grid: ZoneGrid) -> Tuple[float, ZonePoint]:
        """网格上的最大值与取到最大值的点（平局取展平顺序中的第一个）"""
        P, NE, NG = np.meshgrid(grid.p, grid.n_ve, grid.n_vg, indexing="ij")
        P, NE, NG = P.ravel(), NE.ravel(), NG.ravel()
        base, coef = self.market_terms(P, NE, NG, grid.f_tilde)

        RR, KK = np.meshgrid(grid.r, grid.k, indexing="ij")
        energy, xc, xs = self.facility_value(RR, KK)
        # 对 r 取最大
        r_best = np.argmax(energy, axis=0)
        cols = np.arange(grid.k.size)
        e_bar = energy[r_best, cols]

        total = base[:, :, None] + coef[:, :, None] * grid.k[None, None, :] + e_bar[None, None, :]
        total = np.where(np.isnan(total), -np.inf, total)
        flat = int(np.argmax(total))
        q_idx, f_idx, k_idx = np.unravel_index(flat, total.shape)
        value = float(total[q_idx, f_idx, k_idx])
        ri = r_best[k_idx]
        point = self.point(P[q_idx], NE[q_idx], NG[q_idx], grid.f_tilde[f_idx],
                           grid.r[ri], grid.k[k_idx], xc[ri, k_idx], xs[ri, k_idx])
        return value, point

    def single(self, y: np.ndarray) -> Tuple[float, ZonePoint]:
        """连续点 y = (p, N_ve, N_vg, f̃, r, k) 处的值（x̄ 取最优）"""
        p, n_ve, n_vg, f_tilde, r, k = (float(v) for v in y)
        if not self.inst.ev_active:
            n_ve, r, k = 0.0, 1.0, 0.0
        base, coef = self.market_terms(np.array([p]), np.array([n_ve]), np.array([n_vg]), np.array([f_tilde]))
        energy, xc, xs = self.facility_value(np.array([r]), np.array([k]))
        value = float(base[0, 0] + coef[0, 0] * k + energy[0])
        if not np.isfinite(value):
            value = -np.inf
        return value, self.point(p, n_ve, n_vg, f_tilde, r, k, xc[0], xs[0])


def _polish(model: _Separable, grid: ZoneGrid, start: ZonePoint) -> Tuple[float, ZonePoint]:
    """在网格范围内做 L-BFGS-B 连续精修"""
    tau = model.tau
    y0 = np.array([start.p, start.N_ve, start.N_vg, start.f_tilde(tau), start.r, start.k])
    bounds = grid.bounds()
    scale = np.array([max(hi - lo, 1e-9) for lo, hi in bounds])
    lows = np.array([lo for lo, _ in bounds])

    def objective(u):
        value, _ = model.single(lows + u * scale)
        return 1e30 if not np.isfinite(value) else -value

    u0 = np.clip((y0 - lows) / scale, 0.0, 1.0)
    result = minimize(objective, u0, method="L-BFGS-B", bounds=[(0.0, 1.0)] * 6,
                      options={"maxiter": 60})
    return model.single(lows + np.clip(result.x, 0.0, 1.0) * scale)


def anchor_values(inst: SubproblemInstance) -> Tuple[float, Optional[ZonePoint]]:
    """锚点处的 L_{i,t}（直接计算；换电等待与最终报告一样逐点求解嵌入链）"""
    sc = inst.scenario
    waits = None
    if inst.swap_table is not None:
        waits = DirectSwapWait(sc.swap_spec, sc.charge_spec.tau_c, inst.swap_table.substeps)
    best, best_point = -np.inf, None
    for anchor in inst.anchors:
        value = float(zone_lagrangian(
            inst.scenario, inst.multipliers, inst.weight, inst.stage, inst.zone,
            anchor.xt_c, anchor.xt_s, anchor.p, anchor.N_ve, anchor.N_vg, anchor.f_row,
            anchor.r, anchor.k, waits,
        ))
        if np.isfinite(value) and value > best:
            best, best_point = value, anchor
    return best, best_point


def solve_subproblem(inst: SubproblemInstance) -> SubproblemResult:
    """
    求解一个（区域, 阶段）子问题

    取 ȳ 网格最大值、连续精修值与锚点值三者中的最大者。

    Returns:
        SubproblemResult
    """
    model = _Separable(inst)
    grid = inst.grid()
    grid_value, grid_point = model.lattice(grid)

    polish_value, polish_point = -np.inf, grid_point
    if inst.grid_options.polish and np.isfinite(grid_value):
        polish_value, polish_point = _polish(model, grid, grid_point)

    anchor_value, anchor_point = anchor_values(inst)

    value, point, source = grid_value, grid_point, "grid"
    if polish_value > value:
        value, point, source = polish_value, polish_point, "polish"
    if anchor_value > value:
        value, point, source = anchor_value, anchor_point, "anchor"
    return SubproblemResult(
        stage=inst.stage, zone=inst.zone, value=float(value), point=point,
        grid_value=float(grid_value), polish_value=float(polish_value),
        anchor_value=float(anchor_value), source=source, grid_size=grid.size,
        margin=margin_floor(value),
    )


def margin_floor(value: float) -> float:
    """网格余量下限 1e−3·(1+|v|)"""
    return float(1e-3 * (1.0 + abs(value)))


def refinement_margin(inst: SubproblemInstance, result: Optional[SubproblemResult] = None) -> float:
    """
    网格粗糙度余量：加倍分辨率后的取值变化，至少为 result.margin
    """
    result = result or solve_subproblem(inst)
    refined = solve_subproblem(inst.doubled())
    shift = abs(refined.value - result.value)
    return float(max(shift, result.margin))
