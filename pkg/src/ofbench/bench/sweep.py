"""Sweeps over concurrency, heterogeneity and connectivity."""

from __future__ import annotations

import enum
import logging
from dataclasses import dataclass, replace

from ..engine.config import StrategyMatrix
from ..engine.process import spawn_engine
from .config import BenchConfig
from .emulator import RunResult, run_bench

log = logging.getLogger(__name__)


class SweepAxis(enum.Enum):
    CONCURRENCY = "concurrency"
    HETEROGENEITY = "heterogeneity"
    CONNECTIVITY = "connectivity"


@dataclass
class SweepPoint:
    axis: SweepAxis
    point: int
    result: RunResult | None = None
    error: str | None = None
    # True when the engine port could be bound again after teardown
    rebind_ok: bool | None = None
    loopback: bool = True


def point_config(axis: SweepAxis, point: int, base: BenchConfig,
                 matrix: StrategyMatrix | None) -> tuple[BenchConfig, StrategyMatrix | None]:
    if axis is SweepAxis.HETEROGENEITY:
        return replace(base, unique_macs=point), matrix
    if axis is SweepAxis.CONNECTIVITY:
        return replace(base, switches=point), matrix
    if matrix is None:
        raise ValueError("a concurrency sweep needs a co-located engine to restart")
    return base, replace(matrix, threading=replace(matrix.threading, worker_count=point))


def run_sweep(axis: SweepAxis, points, base: BenchConfig,
              matrix: StrategyMatrix | None = None, log_level: str = "WARNING") -> list[SweepPoint]:
    """One full measurement per point, in point order.

    With ``matrix`` the engine is spawned fresh for every point and torn down
    afterwards; otherwise ``base.controller`` is used as is.  A failing point is
    recorded and the sweep moves on.
    """
    points = sorted(points)
    if not points:
        raise ValueError("points must be non-empty")
    if axis is SweepAxis.CONCURRENCY and matrix is None:
        raise ValueError("a concurrency sweep needs a co-located engine to restart")
    out = []
    for point in points:
        cfg, mx = point_config(axis, point, base, matrix)
        sp = SweepPoint(axis, point, loopback=mx is not None)
        log.info("event=sweep_point axis=%s point=%d", axis.value, point)
        engine = None
        try:
            if mx is not None:
                engine = spawn_engine(replace(mx, listen_port=0, stats_port=0,
                                              listen_host="127.0.0.1"),
                                      log_level=log_level)
                cfg = replace(cfg, controller=f"{engine.host}:{engine.port}")
                sp.result = run_bench(cfg, stats_fn=engine.stats)
            else:
                sp.result = run_bench(cfg)
        except Exception as exc:
            sp.error = f"{type(exc).__name__}: {exc}"
            log.error("event=sweep_point_failed axis=%s point=%d error=%s",
                      axis.value, point, sp.error)
        finally:
            if engine is not None:
                sp.rebind_ok = engine.terminate()
        out.append(sp)
    return out


__all__ = ["SweepAxis", "SweepPoint", "point_config", "run_sweep"]
