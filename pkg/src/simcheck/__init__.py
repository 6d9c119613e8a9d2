"""离散事件仿真对照模块"""
from .des import MMVResult, SwapSimResult, batch_means, des_mmV, des_swap

__all__ = ["MMVResult", "SwapSimResult", "batch_means", "des_mmV", "des_swap"]
