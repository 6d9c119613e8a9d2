"""乘客市场模块"""
from .demand import demand, flow_residual, logit_share, pickup_time, realized_demand

__all__ = ["demand", "flow_residual", "logit_share", "pickup_time", "realized_demand"]
