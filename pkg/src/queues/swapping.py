"""
换电站混合排队模型

开放部分：电动车按泊松过程到达，站内（含正在换电的车辆）最多 W 辆；
闭合部分：B 块电池循环，换下的电池在最多 C 个充电器上以指数时长充电。
以 h = τ_s/m 为采样间隔构造嵌入马尔可夫链，状态为（站内车辆数 n，各换电位的剩余间隔数，满电电池数 j）。
m = 1 时即以 τ_s 为间隔、状态为 (i, j) 的嵌入链；m 增大时逼近连续时间系统。
"""
import os
import tempfile
import threading
from dataclasses import dataclass, replace
from functools import lru_cache
from math import comb
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numpy as np
import scipy.sparse as sp
from scipy.interpolate import PchipInterpolator
from scipy.sparse.linalg import spsolve
from scipy.stats import binom, poisson

from src.config import settings
from src.model.exceptions import DomainError
from src.model.scenario import SwapStationSpec
from src.queues.charging import QueueMetrics
from src.utils import app_logger

# 构造转移矩阵时舍弃的极小概率（保证行和误差远小于 1e-10）
_PRUNE = 1e-18
# 换电过程的默认细分数及链状态数上限
SUBSTEPS = 6
STATE_BUDGET = 12_000


@dataclass
class SwapChain:
    """换电站嵌入马尔可夫链及其平稳解"""
    spec: SwapStationSpec
    tau_c: float
    lambda_s: float
    substeps: int
    transition: sp.csr_matrix
    stationary: np.ndarray
    G: np.ndarray
    L: float
    throughput: float
    w_s: float
    block: float

    @property
    def n_states(self) -> int:
        return self.transition.shape[0]

    @property
    def interval(self) -> float:
        return self.spec.tau_s / self.substeps


def state_count(spec: SwapStationSpec, substeps: int) -> int:
    """细分数为 substeps 时链的状态数"""
    if substeps == 1:
        return (spec.W + 1) * (spec.B + 1)
    top = min(spec.S, spec.B, spec.W)
    return sum(
        comb(s + substeps - 2, substeps - 2) * (spec.W + 1 - s) * (spec.B + 1 - s)
        for s in range(top + 1)
    )


def default_substeps(spec: SwapStationSpec) -> int:
    """状态数不超过 STATE_BUDGET 的最大细分数（至多 SUBSTEPS）"""
    for m in range(SUBSTEPS, 1, -1):
        if state_count(spec, m) <= STATE_BUDGET:
            return m
    return 1


def arrival_pmf(lambda_s: float, spec: SwapStationSpec, interval: Optional[float] = None) -> np.ndarray:
    """
    一个采样间隔内到达车辆数的分布 g(u)，u = 0..W

    Args:
        interval: 采样间隔，缺省为 τ_s

    Returns:
        长度 W+1 的泊松概率
    """
    interval = spec.tau_s if interval is None else interval
    return poisson.pmf(np.arange(spec.W + 1), lambda_s * interval)


def _arrival_rows(lambda_s: float, spec: SwapStationSpec, interval: float) -> np.ndarray:
    """
    离开后剩余 n 辆时，下一时刻车辆数 n' 的分布（第 n 行）

    n' = W 的概率取精确补集 1 − Σ_{n'<W} g(n' − n)，保证每行和为 1。
    """
    W = spec.W
    mu = lambda_s * interval
    pmf = poisson.pmf(np.arange(W + 1), mu)
    rows = np.zeros((W + 1, W + 1))
    for start in range(W + 1):
        span = W - start
        rows[start, start:W] = pmf[:span]
        rows[start, W] = poisson.sf(span - 1, mu) if span > 0 else 1.0
    return rows


def _completion_rows(spec: SwapStationSpec, tau_c: float, interval: float) -> np.ndarray:
    """
    第 c 行：c 块电池在充电时，一个间隔内充满块数 v 的分布 Binom(c, 1 − e^{−h/τ_c})
    """
    top = min(spec.B, spec.C)
    success = 1.0 - np.exp(-interval / tau_c)
    v = np.arange(top + 1)
    return np.vstack([binom.pmf(v, c, success) for c in range(top + 1)])


def _bay_vectors(limit: int, slots: int) -> List[Tuple[int, ...]]:
    """各剩余间隔数上的换电位计数，总和不超过 limit（零向量在前）"""
    if slots == 0:
        return [()]
    return [
        (first,) + rest
        for first in range(limit + 1)
        for rest in _bay_vectors(limit - first, slots - 1)
    ]


def _build_transition(lambda_s: float, spec: SwapStationSpec, tau_c: float, substeps: int = 1):
    """
    构造转移矩阵

    每个间隔开始时先按 Δ = min(等待车辆, 满电电池, 空闲换电位) 开始换电，
    间隔内到达 u ~ Poisson(λh)，最早开始的一批换电在间隔末完成并离开；
    未充满且不在换电位上的电池最多 C 块同时充电。

    Returns:
        (转移矩阵, 各状态车辆数, 各状态满电数, 各状态开始换电数)
    """
    W, B = spec.W, spec.B
    interval = spec.tau_s / substeps
    bays = _bay_vectors(min(spec.S, B, W), substeps - 1)
    bay_index = {bay: idx for idx, bay in enumerate(bays)}
    busy = [sum(bay) for bay in bays]

    # 状态按 (n, 换电位, j) 字典序排列，j 取 0..B − busy
    start = np.full((W + 1, len(bays)), -1, dtype=np.int64)
    states = []
    offset = 0
    for n in range(W + 1):
        for idx in range(len(bays)):
            if busy[idx] > n:
                continue
            start[n, idx] = offset
            width = B - busy[idx] + 1
            states.extend((n, idx, j) for j in range(width))
            offset += width

    arrivals = _arrival_rows(lambda_s, spec, interval)
    support = [np.flatnonzero(row > _PRUNE) for row in arrivals]
    completions = _completion_rows(spec, tau_c, interval)

    n_states = len(states)
    vehicles = np.empty(n_states, dtype=np.int64)
    full = np.empty(n_states, dtype=np.int64)
    served = np.empty(n_states, dtype=np.int64)
    data, indices, indptr = [], [], [0]
    for s, (n, idx, j) in enumerate(states):
        bay = bays[idx]
        delta = min(n - busy[idx], j, spec.S - busy[idx])
        if substeps == 1:
            done, nxt = delta, 0
        else:
            done, nxt = bay[0], bay_index[bay[1:] + (delta,)]
        charging = min(B - j - busy[idx], spec.C)

        base = n - done
        targets = support[base]
        # j' = j − Δ + v
        cols = start[targets, nxt][:, None] + (j - delta) + np.arange(charging + 1)[None, :]
        probs = arrivals[base, targets][:, None] * completions[charging, : charging + 1][None, :]
        keep = probs > _PRUNE
        data.append(probs[keep])
        indices.append(cols[keep])
        indptr.append(indptr[-1] + int(keep.sum()))
        vehicles[s], full[s], served[s] = n, j, delta

    transition = sp.csr_matrix(
        (np.concatenate(data), np.concatenate(indices), np.array(indptr)),
        shape=(n_states, n_states),
    )
    return transition, vehicles, full, served


def swap_equilibrium(transition: sp.csr_matrix, initial: Optional[np.ndarray] = None,
                     method: str = "direct", tol: float = 1e-14, max_steps: int = 200_000) -> np.ndarray:
    """
    嵌入链的平稳分布

    Args:
        transition: 行随机稀疏矩阵
        initial: 幂迭代的初始分布（method="power" 时使用）
        method: "direct" 稀疏直接求解；"power" 幂迭代

    Returns:
        展平的平稳分布
    """
    n_states = transition.shape[0]
    if method == "power":
        G = np.full(n_states, 1.0 / n_states) if initial is None else np.asarray(initial, dtype=float)
        G = G / G.sum()
        transposed = transition.T.tocsr()
        for _ in range(max_steps):
            nxt = transposed @ G
            if np.abs(nxt - G).sum() < tol:
                G = nxt
                break
            G = nxt
        return G / G.sum()

    # 用归一化方程替换一条冗余的平衡方程
    balance = (transition.T - sp.identity(n_states, format="csr")).tocsr()
    system = sp.vstack([balance[:-1], sp.csr_matrix(np.ones((1, n_states)))]).tocsc()
    rhs = np.zeros(n_states)
    rhs[-1] = 1.0
    G = spsolve(system, rhs)
    G = np.clip(G, 0.0, None)
    return G / G.sum()


def swap_chain_build(lambda_bar_s: float, spec: SwapStationSpec, tau_c: float,
                     substeps: Optional[int] = None) -> SwapChain:
    """
    构造换电站嵌入马尔可夫链并求平稳解

    Args:
        lambda_bar_s: 单站到达率（辆/小时）
        spec: 换电站规格
        tau_c: 电池平均充电时长（小时）
        substeps: 每次换电细分的间隔数 m，缺省由 default_substeps 决定

    Returns:
        SwapChain；G 为（车辆数, 满电数）的边缘分布
    """
    if not lambda_bar_s > 0:
        raise DomainError("换电站到达率必须为正")
    substeps = default_substeps(spec) if substeps is None else int(substeps)
    if substeps < 1:
        raise DomainError("substeps 必须为正整数")

    transition, vehicles, full, served = _build_transition(lambda_bar_s, spec, tau_c, substeps)
    stationary = swap_equilibrium(transition)
    G = np.zeros((spec.W + 1, spec.B + 1))
    np.add.at(G, (vehicles, full), stationary)

    interval = spec.tau_s / substeps
    throughput = float(stationary @ served) / interval
    if not throughput > 0:
        raise DomainError("换电站有效到达率为零")
    chain = SwapChain(
        spec=spec, tau_c=tau_c, lambda_s=lambda_bar_s, substeps=substeps,
        transition=transition, stationary=stationary, G=G,
        L=float(stationary @ vehicles), throughput=throughput, w_s=0.0,
        block=float(np.clip(1.0 - throughput / lambda_bar_s, 0.0, 1.0)),
    )
    chain.w_s = _waiting_time(chain)
    return chain


def _waiting_time(chain: SwapChain) -> float:
    return max(chain.L / chain.throughput - chain.spec.tau_s, 0.0)


def swap_wait(chain: SwapChain) -> QueueMetrics:
    """
    由 Little 法则得到换电等待时间

    完成率 θ = E[Δ]/h，阻塞概率 = 1 − θ/λ，w_s = L/θ − τ_s（下限为 0），L 含正在换电的车辆。
    """
    return QueueMetrics(
        utilization=min(chain.throughput * chain.spec.tau_s / chain.spec.S, 1.0),
        empty_prob=float(chain.G[0].sum()),
        wait=_waiting_time(chain),
        block=chain.block,
        L=chain.L,
    )


@lru_cache(maxsize=4096)
def _direct_metrics(lambda_bar_s: float, spec: SwapStationSpec, tau_c: float, substeps: int) -> QueueMetrics:
    return swap_wait(swap_chain_build(lambda_bar_s, spec, tau_c, substeps))


def swap_metrics(lambda_bar_s: float, spec: SwapStationSpec, tau_c: float,
                 substeps: Optional[int] = None) -> QueueMetrics:
    """直接求解（用于最终报告，进程内按参数缓存）；到达率为 0 时返回空系统"""
    if lambda_bar_s <= 0:
        return QueueMetrics(utilization=0.0, empty_prob=1.0, wait=0.0, block=0.0, L=0.0)
    substeps = default_substeps(spec) if substeps is None else int(substeps)
    return replace(_direct_metrics(float(lambda_bar_s), spec, float(tau_c), substeps))


class SwapWaitTable:
    """
    换电等待时间/阻塞概率的 λ 网格插值表

    网格步长 0.25 辆/小时，覆盖 [0.01, 1.5·S/τ_s]，另补 λ=0 处的极限值；
    单调三次（PCHIP）插值，超出上端时取端点值。
    """

    STEP = 0.25
    LOWEST = 0.01

    def __init__(self, spec: SwapStationSpec, tau_c: float, grid: np.ndarray,
                 waits: np.ndarray, blocks: np.ndarray, substeps: int = 1):
        self.spec = spec
        self.tau_c = tau_c
        self.substeps = int(substeps)
        self.grid = grid
        self.waits = waits
        self.blocks = blocks
        self.upper = float(grid[-1])
        self._wait = PchipInterpolator(grid, waits, extrapolate=False)
        self._block = PchipInterpolator(grid, blocks, extrapolate=False)

    @classmethod
    def grid_for(cls, spec: SwapStationSpec, load_factor: float = 1.5) -> np.ndarray:
        upper = load_factor * spec.service_rate
        points = np.arange(cls.LOWEST, upper, cls.STEP)
        return np.concatenate([[0.0], points, [upper]])

    @classmethod
    def build(cls, spec: SwapStationSpec, tau_c: float, load_factor: float = 1.5,
              substeps: Optional[int] = None) -> "SwapWaitTable":
        """逐点求解嵌入链构造插值表"""
        substeps = default_substeps(spec) if substeps is None else int(substeps)
        grid = cls.grid_for(spec, load_factor)
        waits = np.zeros_like(grid)
        blocks = np.zeros_like(grid)
        for idx, lam in enumerate(grid[1:], start=1):
            metrics = swap_metrics(float(lam), spec, tau_c, substeps)
            waits[idx] = metrics.wait
            blocks[idx] = metrics.block
        # 由于下限截断，个别点可能出现数值抖动，按单调非减修正
        waits = np.maximum.accumulate(waits)
        blocks = np.maximum.accumulate(blocks)
        return cls(spec, tau_c, grid, waits, blocks, substeps)

    def wait(self, lam):
        """插值等待时间（小时）"""
        lam = np.clip(np.asarray(lam, dtype=float), 0.0, self.upper)
        return self._wait(lam)

    def block(self, lam):
        """插值阻塞概率"""
        lam = np.clip(np.asarray(lam, dtype=float), 0.0, self.upper)
        return self._block(lam)

    def save(self, path: Path) -> None:
        """原子写入 npz"""
        path.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(dir=path.parent, suffix=".npz")
        os.close(fd)
        try:
            np.savez_compressed(tmp, grid=self.grid, waits=self.waits, blocks=self.blocks,
                                substeps=np.array(self.substeps))
            os.replace(tmp, path)
        finally:
            if os.path.exists(tmp):
                os.remove(tmp)

    @classmethod
    def load(cls, path: Path, spec: SwapStationSpec, tau_c: float) -> "SwapWaitTable":
        with np.load(path) as data:
            return cls(spec, tau_c, data["grid"], data["waits"], data["blocks"], int(data["substeps"]))


class DirectSwapWait:
    """
    与 SwapWaitTable 接口相同的逐点直接求解

    用于锚点等少量需要与最终报告一致的取值；非有限到达率返回 inf。
    """

    upper = np.inf

    def __init__(self, spec: SwapStationSpec, tau_c: float, substeps: Optional[int] = None):
        self.spec = spec
        self.tau_c = tau_c
        self.substeps = default_substeps(spec) if substeps is None else int(substeps)

    def _apply(self, lam, field_name: str):
        lam = np.asarray(lam, dtype=float)
        out = np.full(lam.shape, np.inf)
        for idx in np.ndindex(lam.shape):
            value = float(lam[idx])
            if np.isfinite(value):
                metrics = swap_metrics(max(value, 0.0), self.spec, self.tau_c, self.substeps)
                out[idx] = getattr(metrics, field_name)
        return out

    def wait(self, lam):
        """直接求解的等待时间（小时）"""
        return self._apply(lam, "wait")

    def block(self, lam):
        """直接求解的阻塞概率"""
        return self._apply(lam, "block")


_TABLES: Dict[Tuple[SwapStationSpec, float, float], SwapWaitTable] = {}
_LOCK = threading.Lock()


def get_swap_table(spec: SwapStationSpec, tau_c: float, load_factor: float = 1.5,
                   cache_dir: Optional[Path] = None) -> SwapWaitTable:
    """
    获取（必要时构造并缓存）换电等待时间插值表

    同一进程内复用；跨进程通过 cache_dir 下的 npz 文件复用，文件损坏时重建。
    文件名含细分数，细分数变化后旧文件不再命中。
    """
    key = (spec, float(tau_c), float(load_factor))
    with _LOCK:
        if key in _TABLES:
            return _TABLES[key]

        substeps = default_substeps(spec)
        directory = Path(cache_dir) if cache_dir is not None else settings.resolve_path(settings.cache_dir)
        path = directory / f"swap_{spec.cache_key(tau_c)}_{load_factor:g}_m{substeps}.npz"
        table = None
        if path.exists():
            try:
                table = SwapWaitTable.load(path, spec, tau_c)
                app_logger.debug(f"命中换电等待时间缓存: {path}")
            except Exception as e:
                app_logger.warning(f"换电等待时间缓存损坏，重新构造: {str(e)}")

        if table is None:
            app_logger.info(
                f"构造换电等待时间表: S={spec.S}, C={spec.C}, B={spec.B}, W={spec.W}, 细分数 {substeps}"
            )
            table = SwapWaitTable.build(spec, tau_c, load_factor, substeps)
            try:
                table.save(path)
            except OSError as e:
                app_logger.warning(f"写入换电等待时间缓存失败: {str(e)}")

        _TABLES[key] = table
        return table
