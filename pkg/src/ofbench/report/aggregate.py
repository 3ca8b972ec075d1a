"""Per-run aggregation: throughput statistics, merged CDF, phase profile."""

from __future__ import annotations

import statistics
from dataclasses import dataclass, field
from typing import Sequence

from ..bench.audit import AuditReport
from ..bench.emulator import LoopResult
from .cdf import LatencyCdf, build_cdf


class InsufficientLoops(ValueError):
    pass


@dataclass(frozen=True)
class PhaseProfile:
    """Share of engine CPU per packet spent in each phase.

    The denominator is process CPU time per packet, or the sum of the sampled
    phases if that is larger, so the fractions never add up past 1.  What is
    left over (loop overhead, polling, the interpreter, syscalls outside the
    timed write) is reported as ``unattributed``.
    """

    decode: float = 0.0
    app: float = 0.0
    encode: float = 0.0
    io: float = 0.0
    samples: int = 0

    @property
    def unattributed(self) -> float:
        return max(1.0 - (self.decode + self.app + self.encode + self.io), 0.0)

    def as_dict(self) -> dict:
        return {"decode": self.decode, "app": self.app, "encode": self.encode,
                "io": self.io, "unattributed": self.unattributed, "samples": self.samples}

    @classmethod
    def from_counters(cls, c: dict, cpu_ns: float | None = None) -> "PhaseProfile":
        n = c.get("samples", 0)
        packets = c.get("packet_ins", 0)
        if not n or not packets:
            return cls()
        decode = c["decode_ns"] / n
        app = c["app_ns"] / n
        encode = c["encode_ns"] / n
        io = 0.0
        if c.get("io_samples"):
            io += c["io_ns"] / c["io_samples"]
        if c.get("recv_samples"):
            io += c["recv_ns"] / c["recv_samples"]
        phases = decode + app + encode + io
        per_packet = (cpu_ns / packets) if cpu_ns else 0.0
        denom = max(per_packet, phases)
        if denom <= 0:
            return cls(samples=n)
        return cls(decode / denom, app / denom, encode / denom, io / denom, n)


def _add_counters(total: dict, part: dict) -> None:
    for k, v in part.items():
        if isinstance(v, dict):
            _add_counters(total.setdefault(k, {}), v)
        elif isinstance(v, (int, float)) and not isinstance(v, bool):
            total[k] = total.get(k, 0) + v


@dataclass
class RunSummary:
    loops: int
    throughputs: list[float]
    mean: float
    stddev: float
    min: float
    max: float
    median: float
    cdf: LatencyCdf | None
    profile: PhaseProfile
    engine: dict = field(default_factory=dict)
    audit: AuditReport = field(default_factory=AuditReport)

    @property
    def packets(self) -> int:
        return int(self.engine.get("packet_ins", 0))

    @property
    def allocs_per_packet(self) -> float | None:
        alloc = self.engine.get("alloc", {})
        if not self.packets:
            return None
        return alloc.get("allocations", 0) / self.packets

    @property
    def handoffs_per_packet(self) -> float | None:
        if not self.packets:
            return None
        return self.engine.get("handoffs", 0) / self.packets

    def as_dict(self) -> dict:
        return {
            "loops": self.loops,
            "throughputs": self.throughputs,
            "mean": self.mean,
            "stddev": self.stddev,
            "min": self.min,
            "max": self.max,
            "median": self.median,
            "p50_us": self.cdf.q(0.5) if self.cdf else None,
            "p99_us": self.cdf.q(0.99) if self.cdf else None,
            "profile": self.profile.as_dict(),
            "allocs_per_packet": self.allocs_per_packet,
            "handoffs_per_packet": self.handoffs_per_packet,
            "audit": self.audit.as_dict(),
        }


def aggregate_run(results: Sequence[LoopResult], warmup: int = 1) -> RunSummary:
    """Aggregate loops after dropping the first ``warmup`` of them."""
    if warmup < 0:
        raise ValueError("warmup must be >= 0")
    if len(results) <= warmup:
        raise InsufficientLoops(f"{len(results)} loops with warmup {warmup}")
    kept = list(results[warmup:])
    tput = [lp.throughput for lp in kept]
    samples: list[float] = []
    engine: dict = {}
    audit = AuditReport(probes=0)
    for lp in kept:
        samples.extend(lp.latencies_us)
        if lp.engine:
            _add_counters(engine, lp.engine)
        audit.add(lp.audit)
    return RunSummary(
        loops=len(kept),
        throughputs=tput,
        mean=statistics.fmean(tput),
        stddev=statistics.stdev(tput) if len(tput) > 1 else 0.0,
        min=min(tput),
        max=max(tput),
        median=statistics.median(tput),
        cdf=build_cdf(samples) if samples else None,
        profile=PhaseProfile.from_counters(engine, engine.get("cpu_ns")),
        engine=engine,
        audit=audit,
    )
