"""Packet memory strategies: a fresh buffer per packet, or a per-worker pool of
pre-allocated buffers that are recycled.

Both strategies report through ``AllocStats`` so that runs can be compared on
allocations and copied bytes, not just throughput.
"""

from __future__ import annotations

import enum
import threading
from dataclasses import dataclass

MIN_POOL_BUFFER_SIZE = 128
DEFAULT_POOL_BUFFER_SIZE = 4096
DEFAULT_POOL_DEPTH = 64


class BufferKind(enum.Enum):
    PER_PACKET_OBJECT = "per_packet_object"
    PREALLOCATED_POOL = "preallocated_pool"


@dataclass(frozen=True)
class BufferStrategy:
    kind: BufferKind = BufferKind.PREALLOCATED_POOL
    pool_buffer_size: int = DEFAULT_POOL_BUFFER_SIZE
    pool_depth: int = DEFAULT_POOL_DEPTH

    def __post_init__(self):
        if self.pool_buffer_size < MIN_POOL_BUFFER_SIZE:
            raise ValueError(f"pool_buffer_size must be >= {MIN_POOL_BUFFER_SIZE}")
        if self.pool_depth < 2:
            raise ValueError("pool_depth must be >= 2")


class DoubleRelease(RuntimeError):
    """A buffer was released while not checked out (ownership violation)."""


@dataclass
class AllocStats:
    allocations: int = 0
    bytes_copied: int = 0
    buffer_reuses: int = 0

    def add(self, other: "AllocStats") -> None:
        self.allocations += other.allocations
        self.bytes_copied += other.bytes_copied
        self.buffer_reuses += other.buffer_reuses

    def as_dict(self) -> dict:
        return {"allocations": self.allocations, "bytes_copied": self.bytes_copied,
                "buffer_reuses": self.buffer_reuses}


class IoBuffer:
    """A byte region with read/write cursors.

    ``data[read_cursor:write_cursor]`` holds unconsumed bytes.  A buffer has one
    owner at a time; ``generation`` is bumped on every release so stale holders
    can be detected.
    """

    __slots__ = ("data", "read_cursor", "write_cursor", "generation", "owner")

    def __init__(self, capacity: int):
        self.data = bytearray(capacity)
        self.read_cursor = 0
        self.write_cursor = 0
        self.generation = 0
        self.owner = None

    @property
    def capacity(self) -> int:
        return len(self.data)

    @property
    def readable(self) -> int:
        return self.write_cursor - self.read_cursor

    @property
    def free(self) -> int:
        return len(self.data) - self.write_cursor

    def writable_view(self) -> memoryview:
        return memoryview(self.data)[self.write_cursor:]

    def readable_view(self) -> memoryview:
        return memoryview(self.data)[self.read_cursor:self.write_cursor]

    def write(self, chunk, stats: AllocStats | None = None) -> None:
        n = len(chunk)
        if n > self.free:
            raise ValueError(f"buffer has {self.free} bytes free, need {n}")
        self.data[self.write_cursor:self.write_cursor + n] = chunk
        self.write_cursor += n
        if stats is not None:
            stats.bytes_copied += n

    def compact(self, stats: AllocStats | None = None) -> None:
        """Move unread bytes to the front so the tail is free again."""
        if self.read_cursor == 0:
            return
        n = self.write_cursor - self.read_cursor
        if n:
            self.data[0:n] = self.data[self.read_cursor:self.write_cursor]
            if stats is not None:
                stats.bytes_copied += n
        self.read_cursor = 0
        self.write_cursor = n

    def reset(self) -> None:
        self.read_cursor = 0
        self.write_cursor = 0

    def __repr__(self) -> str:
        return (f"IoBuffer(capacity={self.capacity}, read={self.read_cursor}, "
                f"write={self.write_cursor}, generation={self.generation})")


def grow_exclusive(buffer: IoBuffer, new_capacity: int, stats: AllocStats) -> IoBuffer:
    """Swap in larger storage, keeping the bytes written so far.

    Only the sole owner may call this.  Nobody else holds a reference to the
    storage, so replacing it cannot race with a writer the way locking on a
    replaceable reference would.
    """
    if new_capacity <= buffer.capacity:
        return buffer
    storage = bytearray(new_capacity)
    n = buffer.write_cursor
    if n:
        storage[:n] = buffer.data[:n]
    buffer.data = storage
    stats.allocations += 1
    stats.bytes_copied += n
    return buffer


class BufferPool:
    """Per-worker buffer source.

    In pool mode ``pool_depth`` buffers are allocated up front and recycled;
    an empty pool falls back to a counted fresh allocation.  In object mode every
    acquire allocates.  Not thread-safe by design: one pool per worker.
    """

    def __init__(self, strategy: BufferStrategy, stats: AllocStats | None = None,
                 audit: bool = False):
        self.strategy = strategy
        self.stats = stats if stats is not None else AllocStats()
        self.audit = audit
        self._free: list[IoBuffer] = []
        self._live: set[int] = set()
        self._size = strategy.pool_buffer_size
        if strategy.kind is BufferKind.PREALLOCATED_POOL:
            for _ in range(strategy.pool_depth):
                self._free.append(IoBuffer(self._size))
            self.stats.allocations += strategy.pool_depth

    @property
    def pooled(self) -> bool:
        return self.strategy.kind is BufferKind.PREALLOCATED_POOL

    @property
    def available(self) -> int:
        return len(self._free)

    def acquire(self, min_capacity: int = 0) -> IoBuffer:
        if self.pooled:
            if self._free and min_capacity <= self._size:
                buf = self._free.pop()
                self.stats.buffer_reuses += 1
            else:
                buf = IoBuffer(max(min_capacity, self._size))
                self.stats.allocations += 1
        else:
            buf = IoBuffer(max(min_capacity, 1))
            self.stats.allocations += 1
        if self.audit:
            buf.owner = threading.get_ident()
            self._live.add(id(buf))
        return buf

    def adopt(self, buf: IoBuffer, previous: "BufferPool") -> None:
        """Take ownership of a buffer checked out from ``previous``."""
        if self.audit:
            previous._live.discard(id(buf))
            self._live.add(id(buf))
            buf.owner = threading.get_ident()

    def release(self, buf: IoBuffer) -> None:
        if self.audit:
            if id(buf) not in self._live:
                raise DoubleRelease(repr(buf))
            self._live.discard(id(buf))
            buf.owner = None
        buf.reset()
        buf.generation += 1
        if self.pooled and len(self._free) < self.strategy.pool_depth:
            self._free.append(buf)
