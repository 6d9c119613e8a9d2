"""命令行、行程数据导入与实验编排"""
from .main import build_parser, main

__all__ = ["build_parser", "main"]
