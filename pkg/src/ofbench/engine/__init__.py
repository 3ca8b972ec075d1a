"""OpenFlow 1.0 learning-switch controller engine."""

from __future__ import annotations

from .config import ModelKind, StrategyMatrix, ThreadingModel
from .counters import Counters
from .runtime import BindFailure, Engine, run_engine

__all__ = [
    "BindFailure",
    "Counters",
    "Engine",
    "ModelKind",
    "StrategyMatrix",
    "ThreadingModel",
    "run_engine",
]
