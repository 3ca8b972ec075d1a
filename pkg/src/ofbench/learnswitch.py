"""Learning-switch application and its MAC tables.

Two table strategies share one storage layout (flat open addressing with
linear probing, no per-entry objects):

* ``SharedLockedTable`` -- one table for all workers, split into lock stripes;
* ``ShardedTable`` -- one private table per worker, keyed by datapath id, with
  no locks at all on the lookup/insert path.
"""

from __future__ import annotations

import enum
import threading
from array import array
from typing import Iterator, NamedTuple

from .ofwire import OFPP_FLOOD


class TableStrategy(enum.Enum):
    SHARED_LOCKED = "shared_locked"
    SHARDED_PER_WORKER = "sharded_per_worker"


class WrongShard(RuntimeError):
    """A shard was touched by a thread that does not own it."""


class MacKey(NamedTuple):
    datapath_id: int
    mac: int


class OpenAddressingMap:
    """(datapath_id, mac) -> port map over three flat arrays.

    Slots are empty when ``ports[i] == 0``; stored values are ``port + 1``.
    Probing starts at ``hash((dpid, mac))``, which CPython mixes in C.
    The table doubles once it is more than half full.
    """

    __slots__ = ("_dpids", "_macs", "_ports", "_mask", "_size")

    def __init__(self, capacity: int = 64):
        n = 8
        while n < capacity * 2:
            n <<= 1
        self._alloc(n)
        self._size = 0

    def _alloc(self, n: int) -> None:
        self._dpids = array("Q", bytes(8 * n))
        self._macs = array("Q", bytes(8 * n))
        self._ports = array("i", bytes(4 * n))
        self._mask = n - 1

    def __len__(self) -> int:
        return self._size

    @property
    def slots(self) -> int:
        return self._mask + 1

    def get(self, dpid: int, mac: int, h: int | None = None) -> int | None:
        mask = self._mask
        ports = self._ports
        macs = self._macs
        i = (hash((dpid, mac)) if h is None else h) & mask
        while True:
            p = ports[i]
            if p == 0:
                return None
            if macs[i] == mac and self._dpids[i] == dpid:
                return p - 1
            i = (i + 1) & mask

    def put(self, dpid: int, mac: int, port: int, h: int | None = None) -> None:
        mask = self._mask
        ports = self._ports
        macs = self._macs
        i = (hash((dpid, mac)) if h is None else h) & mask
        while True:
            p = ports[i]
            if p == 0:
                self._dpids[i] = dpid
                macs[i] = mac
                ports[i] = port + 1
                self._size += 1
                if self._size * 2 > mask:
                    self._resize()
                return
            if macs[i] == mac and self._dpids[i] == dpid:
                ports[i] = port + 1
                return
            i = (i + 1) & mask

    def _resize(self) -> None:
        old = (self._dpids, self._macs, self._ports)
        self._alloc((self._mask + 1) * 2)
        mask = self._mask
        dpids, macs, ports = self._dpids, self._macs, self._ports
        for d, m, p in zip(*old):
            if p:
                i = hash((d, m)) & mask
                while ports[i]:
                    i = (i + 1) & mask
                dpids[i] = d
                macs[i] = m
                ports[i] = p

    def items(self) -> Iterator[tuple[MacKey, int]]:
        for d, m, p in zip(self._dpids, self._macs, self._ports):
            if p:
                yield MacKey(d, m), p - 1

    def nbytes(self) -> int:
        return sum(a.itemsize * len(a) for a in (self._dpids, self._macs, self._ports))


class SharedLockedTable:
    """One logical table shared by every worker, guarded by striped locks."""

    strategy = TableStrategy.SHARED_LOCKED

    def __init__(self, stripes: int = 64):
        if stripes < 1:
            raise ValueError("stripes must be >= 1")
        self._stripes = [OpenAddressingMap() for _ in range(stripes)]
        self._locks = [threading.Lock() for _ in range(stripes)]
        # one counter per stripe, only bumped while holding that stripe's lock
        self._acquisitions = [0] * stripes
        self._n = stripes

    def lookup(self, dpid: int, mac: int) -> int | None:
        h = hash((dpid, mac))
        s = (h >> 24) % self._n
        with self._locks[s]:
            self._acquisitions[s] += 1
            return self._stripes[s].get(dpid, mac, h)

    def insert(self, dpid: int, mac: int, port: int) -> None:
        h = hash((dpid, mac))
        s = (h >> 24) % self._n
        with self._locks[s]:
            self._acquisitions[s] += 1
            self._stripes[s].put(dpid, mac, port, h)

    @property
    def lock_acquisitions(self) -> int:
        return sum(self._acquisitions)

    def __len__(self) -> int:
        return sum(len(s) for s in self._stripes)

    def items(self) -> Iterator[tuple[MacKey, int]]:
        for stripe in self._stripes:
            yield from stripe.items()

    def nbytes(self) -> int:
        return sum(s.nbytes() for s in self._stripes)


class ShardedTable:
    """Per-worker shards; datapath ``d`` lives only in shard ``d % shard_count``.

    With ``audit=True`` each shard remembers the first thread that touched it and
    raises ``WrongShard`` if any other thread does.
    """

    strategy = TableStrategy.SHARDED_PER_WORKER
    lock_acquisitions = 0

    def __init__(self, shard_count: int, audit: bool = False):
        if shard_count < 1:
            raise ValueError("shard_count must be >= 1")
        self.shard_count = shard_count
        self.shards = [OpenAddressingMap() for _ in range(shard_count)]
        self.audit = audit
        self._owners: list[int | None] = [None] * shard_count

    def shard_of(self, dpid: int) -> int:
        return dpid % self.shard_count

    def bind(self, shard: int, thread_ident: int | None = None) -> None:
        self._owners[shard] = threading.get_ident() if thread_ident is None else thread_ident

    def _check(self, shard: int) -> None:
        me = threading.get_ident()
        owner = self._owners[shard]
        if owner is None:
            self._owners[shard] = me
        elif owner != me:
            raise WrongShard(f"shard {shard} owned by thread {owner}, touched by {me}")

    def lookup(self, dpid: int, mac: int) -> int | None:
        s = dpid % self.shard_count
        if self.audit:
            self._check(s)
        return self.shards[s].get(dpid, mac)

    def insert(self, dpid: int, mac: int, port: int) -> None:
        s = dpid % self.shard_count
        if self.audit:
            self._check(s)
        self.shards[s].put(dpid, mac, port)

    def __len__(self) -> int:
        return sum(len(s) for s in self.shards)

    def items(self) -> Iterator[tuple[MacKey, int]]:
        for shard in self.shards:
            yield from shard.items()

    def nbytes(self) -> int:
        return sum(s.nbytes() for s in self.shards)


MacTable = SharedLockedTable | ShardedTable


def make_table(strategy: TableStrategy, shard_count: int = 1, audit: bool = False) -> MacTable:
    if strategy is TableStrategy.SHARED_LOCKED:
        return SharedLockedTable()
    return ShardedTable(shard_count, audit=audit)


class Decision(NamedTuple):
    """FORWARD to ``port``, or FLOOD (``port`` is None)."""

    port: int | None

    @property
    def kind(self) -> str:
        return "FLOOD" if self.port is None else "FORWARD"

    @property
    def out_port(self) -> int:
        return OFPP_FLOOD if self.port is None else self.port

    @classmethod
    def forward(cls, port: int) -> "Decision":
        return cls(port)


FLOOD = Decision(None)


def decide_port(table: MacTable, dpid: int, in_port: int, src_mac: int, dst_mac: int) -> int:
    """Learn the source, then return the output port (``OFPP_FLOOD`` if unknown).

    The destination is looked up before the source is learned, so a frame
    addressed to its own source floods the first time it is seen.
    """
    port = table.lookup(dpid, dst_mac)
    table.insert(dpid, src_mac, in_port)
    return OFPP_FLOOD if port is None else port


def handle_packet_in(table: MacTable, datapath_id: int, in_port: int, src_mac: int,
                     dst_mac: int) -> Decision:
    port = table.lookup(datapath_id, dst_mac)
    table.insert(datapath_id, src_mac, in_port)
    return FLOOD if port is None else Decision(port)
