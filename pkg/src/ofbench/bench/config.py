"""Benchmark parameters."""

from __future__ import annotations

import enum
from dataclasses import asdict, dataclass

DEFAULT_CONTROLLER = "127.0.0.1:6633"
MAX_SWITCHES = 0xFFFF
MAX_UNIQUE_MACS = 1 << 32


class BenchMode(enum.Enum):
    THROUGHPUT = "throughput"
    LATENCY = "latency"


def parse_address(text: str, default_port: int = 6633) -> tuple[str, int]:
    host, sep, port = text.rpartition(":")
    if not sep:
        return text, default_port
    return host or "127.0.0.1", int(port)


@dataclass(frozen=True)
class BenchConfig:
    switches: int = 64
    unique_macs: int = 1_000_000
    worker_threads: int = 1
    loops: int = 10
    loop_duration: float = 10.0
    handshake_delay_ms: int = 0
    mode: BenchMode = BenchMode.THROUGHPUT
    controller: str = DEFAULT_CONTROLLER
    warmup: int = 1
    # probes in flight per switch in throughput mode
    window: int = 1 << 16
    # per switch and loop; None means unbounded
    max_probes: int | None = None
    drain_timeout: float = 30.0
    connect_timeout: float = 5.0
    # keep every response for cross-run comparison
    record: bool = False
    max_reruns: int = 2

    def __post_init__(self):
        if not 1 <= self.switches <= MAX_SWITCHES:
            raise ValueError(f"switches must be in 1..{MAX_SWITCHES}")
        if not 2 <= self.unique_macs <= MAX_UNIQUE_MACS:
            raise ValueError("unique_macs must be >= 2 so src and dst can differ")
        if self.loops < 1:
            raise ValueError("loops must be >= 1")
        if self.loop_duration < 0:
            raise ValueError("loop_duration must be >= 0")
        if self.worker_threads < 1:
            raise ValueError("worker_threads must be >= 1")
        if self.window < 1:
            raise ValueError("window must be >= 1")
        if self.warmup < 0:
            raise ValueError("warmup must be >= 0")
        if self.handshake_delay_ms < 0:
            raise ValueError("handshake_delay_ms must be >= 0")
        if self.max_probes is not None and self.max_probes < 0:
            raise ValueError("max_probes must be >= 0")

    @property
    def address(self) -> tuple[str, int]:
        return parse_address(self.controller)

    def as_dict(self) -> dict:
        d = asdict(self)
        d["mode"] = self.mode.value
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "BenchConfig":
        d = dict(d)
        if "mode" in d:
            d["mode"] = BenchMode(d["mode"])
        return cls(**d)
