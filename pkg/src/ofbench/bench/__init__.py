"""Switch emulator, load driver and sweeps."""

from __future__ import annotations

from .audit import AuditReport, audit_responses
from .config import BenchConfig, BenchMode
from .emulator import ConnectionLost, LoopResult, RunResult, run_bench
from .probes import gen_macs
from .sweep import SweepAxis, SweepPoint, run_sweep

__all__ = [
    "AuditReport",
    "BenchConfig",
    "BenchMode",
    "ConnectionLost",
    "LoopResult",
    "RunResult",
    "SweepAxis",
    "SweepPoint",
    "audit_responses",
    "gen_macs",
    "run_bench",
    "run_sweep",
]
