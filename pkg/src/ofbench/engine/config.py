"""Engine configuration: the (threading, buffers, table) strategy matrix."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

from ..bufferpool import BufferKind, BufferStrategy
from ..learnswitch import TableStrategy

DEFAULT_LISTEN_PORT = 6633
DEFAULT_MAX_WORKERS = 1024


class ModelKind(enum.Enum):
    SINGLE_IO_QUEUE = "single_io_queue"
    SHARED_POOL_QUEUE = "shared_pool_queue"
    RUN_TO_COMPLETION = "run_to_completion"


@dataclass(frozen=True)
class ThreadingModel:
    kind: ModelKind = ModelKind.RUN_TO_COMPLETION
    worker_count: int = 1
    pin_threads: bool = False
    max_workers: int = DEFAULT_MAX_WORKERS

    def __post_init__(self):
        if self.worker_count < 1:
            raise ValueError("worker_count must be >= 1")
        if self.worker_count > self.max_workers:
            raise ValueError(
                f"worker_count {self.worker_count} exceeds max_workers {self.max_workers}")


@dataclass(frozen=True)
class StrategyMatrix:
    threading: ThreadingModel = field(default_factory=ThreadingModel)
    buffers: BufferStrategy = field(default_factory=BufferStrategy)
    table: TableStrategy = TableStrategy.SHARDED_PER_WORKER
    listen_port: int = DEFAULT_LISTEN_PORT
    listen_host: str = "0.0.0.0"
    # engine knobs that are not part of the matrix proper
    stats_port: int = 0
    sample_every: int = 64
    queue_capacity: int = 4096
    idle_timeout: int = 0
    hard_timeout: int = 0
    audit: bool = False

    def __post_init__(self):
        if (self.threading.kind is not ModelKind.RUN_TO_COMPLETION
                and self.table is TableStrategy.SHARDED_PER_WORKER):
            raise ValueError(
                f"{self.threading.kind.value} workers do not own shards; "
                "use the shared_locked table")
        if self.sample_every < 1:
            raise ValueError("sample_every must be >= 1")
        if self.queue_capacity < 1:
            raise ValueError("queue_capacity must be >= 1")

    @property
    def pooled(self) -> bool:
        return self.buffers.kind is BufferKind.PREALLOCATED_POOL

    def as_dict(self) -> dict:
        return {
            "threading": self.threading.kind.value,
            "workers": self.threading.worker_count,
            "pin_threads": self.threading.pin_threads,
            "max_workers": self.threading.max_workers,
            "buffers": self.buffers.kind.value,
            "pool_buffer_size": self.buffers.pool_buffer_size,
            "pool_depth": self.buffers.pool_depth,
            "table": self.table.value,
            "listen_host": self.listen_host,
            "listen_port": self.listen_port,
            "stats_port": self.stats_port,
            "sample_every": self.sample_every,
            "queue_capacity": self.queue_capacity,
            "idle_timeout": self.idle_timeout,
            "hard_timeout": self.hard_timeout,
            "audit": self.audit,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "StrategyMatrix":
        return cls(
            threading=ThreadingModel(
                ModelKind(d.get("threading", ModelKind.RUN_TO_COMPLETION.value)),
                int(d.get("workers", 1)),
                bool(d.get("pin_threads", False)),
                int(d.get("max_workers", DEFAULT_MAX_WORKERS)),
            ),
            buffers=BufferStrategy(
                BufferKind(d.get("buffers", BufferKind.PREALLOCATED_POOL.value)),
                int(d.get("pool_buffer_size", 4096)),
                int(d.get("pool_depth", 64)),
            ),
            table=TableStrategy(d.get("table", TableStrategy.SHARDED_PER_WORKER.value)),
            listen_port=int(d.get("listen_port", DEFAULT_LISTEN_PORT)),
            listen_host=str(d.get("listen_host", "0.0.0.0")),
            stats_port=int(d.get("stats_port", 0)),
            sample_every=int(d.get("sample_every", 64)),
            queue_capacity=int(d.get("queue_capacity", 4096)),
            idle_timeout=int(d.get("idle_timeout", 0)),
            hard_timeout=int(d.get("hard_timeout", 0)),
            audit=bool(d.get("audit", False)),
        )
