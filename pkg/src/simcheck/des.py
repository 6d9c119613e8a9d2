"""
离散事件仿真对照

M/M/V 充电站与连续时间换电站仿真，用于独立校验解析排队模型。
均值置信区间采用批均值法（100 批，95% t 分位数）。
"""
import heapq
from collections import deque
from typing import Deque, List, NamedTuple

import numpy as np
from scipy import stats

from src.model.exceptions import DomainError, UnstableQueueError
from src.model.scenario import ChargeStationSpec, SwapStationSpec

MIN_ARRIVALS = 100_000
N_BATCHES = 100
WARMUP_FRACTION = 0.01

ARRIVAL = 0
SWAP_DONE = 1
CHARGE_DONE = 2


class MMVResult(NamedTuple):
    mean_wait: float
    ci_halfwidth: float


class SwapSimResult(NamedTuple):
    mean_wait: float
    block_rate: float
    ci_halfwidth: float
    block_ci: float


def batch_means(samples: np.ndarray, n_batches: int = N_BATCHES) -> tuple:
    """
    批均值估计

    Returns:
        (均值, 95% 置信区间半宽)
    """
    samples = np.asarray(samples, dtype=float)
    size = samples.size // n_batches
    if size == 0:
        return float(samples.mean()) if samples.size else 0.0, float("inf")
    means = samples[: size * n_batches].reshape(n_batches, size).mean(axis=1)
    halfwidth = stats.t.ppf(0.975, n_batches - 1) * means.std(ddof=1) / np.sqrt(n_batches)
    return float(samples.mean()), float(halfwidth)


def des_mmV(lam: float, spec: ChargeStationSpec, n_arrivals: int = 1_000_000, seed: int = 0) -> MMVResult:
    """
    事件驱动的 M/M/V 仿真（先到先服务）

    Args:
        lam: 到达率（辆/小时）
        spec: 充电站规格
        n_arrivals: 到达数量（至少 10⁵）
        seed: 随机种子

    Returns:
        (平均排队等待时间, 95% 置信区间半宽)，单位小时
    """
    rho = lam * spec.tau_c / spec.V
    if rho >= 1.0:
        raise UnstableQueueError(rho)
    if n_arrivals < MIN_ARRIVALS:
        raise DomainError(f"n_arrivals 至少为 {MIN_ARRIVALS}")

    rng = np.random.default_rng(seed)
    arrivals = np.cumsum(rng.exponential(1.0 / lam, n_arrivals))
    services = rng.exponential(spec.tau_c, n_arrivals)

    # 各充电桩的空闲时刻
    free_at: List[float] = [0.0] * spec.V
    waits = np.empty(n_arrivals)
    for idx in range(n_arrivals):
        now = arrivals[idx]
        earliest = heapq.heappop(free_at)
        start = now if now > earliest else earliest
        waits[idx] = start - now
        heapq.heappush(free_at, start + services[idx])

    warmup = int(n_arrivals * WARMUP_FRACTION)
    mean, halfwidth = batch_means(waits[warmup:])
    return MMVResult(mean_wait=mean, ci_halfwidth=halfwidth)


def des_swap(lam: float, spec: SwapStationSpec, tau_c: float, n_arrivals: int = 1_000_000,
             seed: int = 0) -> SwapSimResult:
    """
    连续时间换电站仿真

    泊松到达；S 个工位，每次换电固定 τ_s；换电开始时取走一块满电电池，
    换电结束后换下的电池进入充电（最多 C 块同时充电，时长服从均值 τ_c 的指数分布）；
    站内车辆（排队 + 换电中）达到 W 时新到车辆离开。

    Args:
        lam: 到达率（辆/小时）
        spec: 换电站规格
        tau_c: 电池平均充电时长（小时）
        n_arrivals: 到达数量（至少 10⁵）
        seed: 随机种子

    Returns:
        (被接纳车辆的平均等待时间, 阻塞比例, 等待时间置信区间半宽, 阻塞比例置信区间半宽)
    """
    if not lam > 0:
        raise DomainError("到达率必须为正")
    if n_arrivals < MIN_ARRIVALS:
        raise DomainError(f"n_arrivals 至少为 {MIN_ARRIVALS}")

    rng = np.random.default_rng(seed)
    interarrivals = rng.exponential(1.0 / lam, n_arrivals)
    charge_times = rng.exponential(tau_c, n_arrivals)
    charge_cursor = 0

    events: List[tuple] = []
    sequence = 0
    heapq.heappush(events, (interarrivals[0], sequence, ARRIVAL))
    arrived = 0

    queue: Deque[float] = deque()
    in_system = 0
    busy_bays = 0
    full = spec.B
    charging = 0
    pending = 0

    waits: List[float] = []
    blocked = np.zeros(n_arrivals, dtype=bool)

    while events:
        now, _, kind = heapq.heappop(events)

        if kind == ARRIVAL:
            index = arrived
            arrived += 1
            if arrived < n_arrivals:
                sequence += 1
                heapq.heappush(events, (now + interarrivals[arrived], sequence, ARRIVAL))
            if in_system >= spec.W:
                blocked[index] = True
            else:
                in_system += 1
                queue.append(now)

        elif kind == SWAP_DONE:
            busy_bays -= 1
            in_system -= 1
            if charging < spec.C:
                charging += 1
                sequence += 1
                heapq.heappush(events, (now + charge_times[charge_cursor], sequence, CHARGE_DONE))
                charge_cursor += 1
            else:
                pending += 1

        else:
            full += 1
            charging -= 1
            if pending > 0:
                pending -= 1
                charging += 1
                sequence += 1
                heapq.heappush(events, (now + charge_times[charge_cursor], sequence, CHARGE_DONE))
                charge_cursor += 1

        while busy_bays < spec.S and queue and full > 0:
            waits.append(now - queue.popleft())
            full -= 1
            busy_bays += 1
            sequence += 1
            heapq.heappush(events, (now + spec.tau_s, sequence, SWAP_DONE))

    warmup = int(n_arrivals * WARMUP_FRACTION)
    admitted_warmup = int(np.count_nonzero(~blocked[:warmup]))
    mean, halfwidth = batch_means(np.asarray(waits[admitted_warmup:]))
    block_rate, block_ci = batch_means(blocked[warmup:].astype(float))
    return SwapSimResult(mean_wait=mean, block_rate=block_rate, ci_halfwidth=halfwidth, block_ci=block_ci)
