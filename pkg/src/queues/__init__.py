"""排队模型模块"""
from .charging import QueueMetrics, access_time, erlang_c_terms, erlang_c_wait
from .swapping import (
    DirectSwapWait,
    SwapChain,
    SwapWaitTable,
    arrival_pmf,
    default_substeps,
    get_swap_table,
    swap_chain_build,
    swap_equilibrium,
    swap_metrics,
    swap_wait,
)
from .probe import ProbeRow, convexity_probe, probe_flags

__all__ = [
    "QueueMetrics",
    "access_time",
    "erlang_c_terms",
    "erlang_c_wait",
    "DirectSwapWait",
    "SwapChain",
    "SwapWaitTable",
    "arrival_pmf",
    "default_substeps",
    "get_swap_table",
    "swap_chain_build",
    "swap_equilibrium",
    "swap_metrics",
    "swap_wait",
    "ProbeRow",
    "convexity_probe",
    "probe_flags",
]
