"""Per-connection packet paths for the two buffer strategies.

``PooledPath`` keeps every connection's bytes in pool buffers and answers
packet-ins with flat struct reads/writes at fixed offsets.  ``ObjectPath`` is the
legacy shape: each received chunk, each message and each reply is a fresh
bytes object, and every packet-in is materialized as message objects before the
reply is built and serialized.

A path instance belongs to one thread (a worker or the IO thread).
"""

from __future__ import annotations

import socket
from time import perf_counter_ns

from .. import ofwire
from ..bufferpool import BufferPool, IoBuffer, grow_exclusive
from ..learnswitch import decide_port, handle_packet_in
from ..ofwire import (
    HEADER,
    OFP_HEADER_LEN,
    OFP_VERSION,
    PEEK_PACKET_IN_LEN,
    BadVersion,
    MalformedLength,
    OfType,
    TruncatedBody,
    pack_flow_mod_into,
    peek_packet_in,
)
from .counters import Counters
from .handshake import ConnState, Phase, handshake_step

_PACKET_IN = int(OfType.PACKET_IN)
_ECHO_REQUEST = int(OfType.ECHO_REQUEST)
FLOW_MOD_LEN = 80
# object path: stop reading a connection once this much output is queued
OUT_HIGH_WATER = 256 * 1024


class Conn:
    __slots__ = (
        "sock", "fd", "peer", "state", "ready", "dpid", "closed",
        "inbuf", "outbuf", "pending", "out_chunks", "out_bytes", "out_full",
        "events", "paused", "order_lock", "next_seq", "enq_seq", "parked", "owner",
    )

    def __init__(self, sock: socket.socket, peer=None):
        self.sock = sock
        self.fd = sock.fileno()
        self.peer = peer
        self.state = ConnState()
        self.ready = False
        self.dpid = None
        self.closed = False
        self.inbuf: IoBuffer | None = None
        self.outbuf: IoBuffer | None = None
        self.pending = b""
        self.out_chunks: list = []
        self.out_bytes = 0
        self.out_full = False
        self.events = 0
        self.paused = False
        self.order_lock = None
        self.next_seq = 0
        self.enq_seq = 0
        self.parked: dict = {}
        self.owner = None


class PeerClosed(Exception):
    pass


class _PathBase:
    def __init__(self, pool: BufferPool, counters: Counters, table, matrix):
        self.pool = pool
        self.counters = counters
        self.stats = counters.alloc
        self.table = table
        self.every = matrix.sample_every
        self.idle = matrix.idle_timeout
        self.hard = matrix.hard_timeout
        self.chunk = matrix.buffers.pool_buffer_size
        # acceptor paths stop at the first READY packet-in and leave it for a worker
        self.handshake_only = False
        # queue models draw work items from a separate pool so connections cannot starve it
        self.item_pool = pool

    def control(self, conn: Conn, header, body) -> None:
        """Anything that is not a READY packet-in: handshake, echo, or skipped."""
        msg = ofwire.decode_message(header, body)
        if conn.ready:
            if msg.msg_type == OfType.ECHO_REQUEST:
                self.send_message(conn, ofwire.EchoReply(msg.xid, msg.data))
            elif msg.msg_type == OfType.PACKET_IN:
                raise AssertionError("packet-in routed to control path")
            return
        state, replies = handshake_step(conn.state, msg)
        conn.state = state
        for reply in replies:
            self.send_message(conn, reply)
        if state.phase is Phase.READY:
            conn.ready = True
            conn.dpid = state.datapath_id

    def _sample_io(self, ns: int, nbytes: int, unit: int) -> None:
        # per-packet share of one write syscall
        c = self.counters
        c.io_ns += int(ns / max(nbytes / unit, 1.0))
        c.io_samples += 1

    def _sample_recv(self, ns: int, nbytes: int) -> None:
        c = self.counters
        c.recv_ns += int(ns / max(nbytes / ofwire.CANONICAL_PACKET_IN_LEN, 1.0))
        c.recv_samples += 1


class PooledPath(_PathBase):
    pooled = True

    def attach(self, conn: Conn) -> None:
        conn.inbuf = self.pool.acquire(self.chunk)
        conn.outbuf = self.pool.acquire(self.chunk)

    def detach(self, conn: Conn) -> None:
        for buf in (conn.inbuf, conn.outbuf):
            if buf is not None:
                self.pool.release(buf)
        conn.inbuf = conn.outbuf = None

    def adopt(self, conn: Conn, previous: "PooledPath") -> None:
        """Take over a connection whose buffers came from another thread's pool.

        Ownership moves with the connection; nothing is copied.
        """
        for buf in (conn.inbuf, conn.outbuf):
            if buf is not None:
                self.pool.adopt(buf, previous.pool)

    def output_pending(self, conn: Conn) -> int:
        return conn.outbuf.readable

    def recv(self, conn: Conn) -> None:
        buf = conn.inbuf
        if buf.read_cursor and buf.free < OFP_HEADER_LEN * 16:
            buf.compact(self.stats)
        if buf.free == 0:
            grow_exclusive(buf, buf.capacity * 2, self.stats)
        sample = self.counters.packet_ins % self.every == 0
        if sample:
            t0 = perf_counter_ns()
        n = conn.sock.recv_into(buf.writable_view())
        if n == 0:
            raise PeerClosed()
        if sample:
            self._sample_recv(perf_counter_ns() - t0, n)
        buf.write_cursor += n

    def send_message(self, conn: Conn, msg) -> None:
        out = conn.outbuf
        size = ofwire.encoded_size(msg)
        if out.free < size:
            out.compact(self.stats)
        if out.free < size:
            grow_exclusive(out, max(out.capacity * 2, out.write_cursor + size), self.stats)
        out.write_cursor += ofwire.encode_into(msg, out.data, out.write_cursor)

    def process_input(self, conn: Conn) -> None:
        """Answer every complete message in the input buffer.

        Stops early (setting ``conn.out_full``) when the output buffer has no
        room for another flow-mod; the caller flushes and comes back.
        """
        buf = conn.inbuf
        out = conn.outbuf
        data = buf.data
        pos = buf.read_cursor
        end = buf.write_cursor
        c = self.counters
        table = self.table
        every = self.every
        idle, hard = self.idle, self.hard
        conn.out_full = False
        try:
            while end - pos >= OFP_HEADER_LEN:
                version, mtype, length, _xid = HEADER.unpack_from(data, pos)
                if length < OFP_HEADER_LEN:
                    raise MalformedLength(f"header length {length}")
                if version != OFP_VERSION:
                    raise BadVersion(f"version {version}")
                if end - pos < length:
                    if length > buf.capacity:
                        buf.read_cursor = pos
                        buf.compact(self.stats)
                        pos = 0
                        grow_exclusive(buf, length, self.stats)
                        return
                    break
                if mtype == _PACKET_IN and conn.ready:
                    if self.handshake_only:
                        break
                    if length < PEEK_PACKET_IN_LEN:
                        raise TruncatedBody("packet-in too short for an Ethernet header")
                    if out.capacity - out.write_cursor < FLOW_MOD_LEN:
                        if out.read_cursor:
                            out.compact(self.stats)
                        if out.capacity - out.write_cursor < FLOW_MOD_LEN:
                            conn.out_full = True
                            break
                    n = c.packet_ins
                    if n % every:
                        xid, buffer_id, in_port, src, dst = peek_packet_in(data, pos)
                        port = decide_port(table, conn.dpid, in_port, src, dst)
                        pack_flow_mod_into(out.data, out.write_cursor, xid, in_port, src,
                                           dst, buffer_id, port, idle, hard)
                    else:
                        t0 = perf_counter_ns()
                        xid, buffer_id, in_port, src, dst = peek_packet_in(data, pos)
                        t1 = perf_counter_ns()
                        port = decide_port(table, conn.dpid, in_port, src, dst)
                        t2 = perf_counter_ns()
                        pack_flow_mod_into(out.data, out.write_cursor, xid, in_port, src,
                                           dst, buffer_id, port, idle, hard)
                        t3 = perf_counter_ns()
                        c.samples += 1
                        c.decode_ns += t1 - t0
                        c.app_ns += t2 - t1
                        c.encode_ns += t3 - t2
                        c.wall_ns += t3 - t0
                    out.write_cursor += FLOW_MOD_LEN
                    c.packet_ins = n + 1
                    c.flow_mods += 1
                else:
                    header = ofwire.parse_header(data, pos)
                    self.control(conn, header, data[pos + OFP_HEADER_LEN:pos + length])
                    out = conn.outbuf
                pos += length
        finally:
            buf.read_cursor = pos
            if pos == buf.write_cursor:
                buf.reset()

    def flush(self, conn: Conn) -> None:
        out = conn.outbuf
        pending = out.write_cursor - out.read_cursor
        if not pending:
            return
        sample = self.counters.flow_mods % self.every == 0
        if sample:
            t0 = perf_counter_ns()
        try:
            sent = conn.sock.send(memoryview(out.data)[out.read_cursor:out.write_cursor])
        except (BlockingIOError, InterruptedError):
            return
        if sample:
            self._sample_io(perf_counter_ns() - t0, sent, FLOW_MOD_LEN)
        out.read_cursor += sent
        if out.read_cursor == out.write_cursor:
            out.reset()

    # -- queue-based models ------------------------------------------------

    def frame_for_queue(self, conn: Conn, emit) -> bool:
        """Hand each READY packet-in to ``emit(conn, item)`` as its own pool buffer.

        Returns False when the pool is dry or ``emit`` refuses; unconsumed input
        stays buffered for a later call.
        """
        buf = conn.inbuf
        data = buf.data
        pos = buf.read_cursor
        end = buf.write_cursor
        pool = self.item_pool
        ok = True
        try:
            while end - pos >= OFP_HEADER_LEN:
                version, mtype, length, _xid = HEADER.unpack_from(data, pos)
                if length < OFP_HEADER_LEN:
                    raise MalformedLength(f"header length {length}")
                if version != OFP_VERSION:
                    raise BadVersion(f"version {version}")
                if end - pos < length:
                    if length > buf.capacity:
                        buf.read_cursor = pos
                        buf.compact(self.stats)
                        pos = 0
                        grow_exclusive(buf, length, self.stats)
                        return True
                    break
                if mtype == _PACKET_IN and conn.ready:
                    if length < PEEK_PACKET_IN_LEN:
                        raise TruncatedBody("packet-in too short for an Ethernet header")
                    if not pool.available:
                        ok = False
                        break
                    item = pool.acquire(length)
                    item.data[0:length] = data[pos:pos + length]
                    item.write_cursor = length
                    self.stats.bytes_copied += length
                    if not emit(conn, item):
                        pool.release(item)
                        ok = False
                        break
                else:
                    header = ofwire.parse_header(data, pos)
                    self.control(conn, header, data[pos + OFP_HEADER_LEN:pos + length])
                pos += length
        finally:
            buf.read_cursor = pos
            if pos == buf.write_cursor:
                buf.reset()
        return ok

    def answer_item(self, dpid: int, item: IoBuffer) -> IoBuffer:
        """Worker side: decode the packet-in in ``item`` and overwrite it with the flow-mod."""
        c = self.counters
        data = item.data
        n = c.packet_ins
        if n % self.every:
            xid, buffer_id, in_port, src, dst = peek_packet_in(data, 0)
            port = decide_port(self.table, dpid, in_port, src, dst)
            pack_flow_mod_into(data, 0, xid, in_port, src, dst, buffer_id, port,
                               self.idle, self.hard)
        else:
            t0 = perf_counter_ns()
            xid, buffer_id, in_port, src, dst = peek_packet_in(data, 0)
            t1 = perf_counter_ns()
            port = decide_port(self.table, dpid, in_port, src, dst)
            t2 = perf_counter_ns()
            pack_flow_mod_into(data, 0, xid, in_port, src, dst, buffer_id, port,
                               self.idle, self.hard)
            t3 = perf_counter_ns()
            c.samples += 1
            c.decode_ns += t1 - t0
            c.app_ns += t2 - t1
            c.encode_ns += t3 - t2
            c.wall_ns += t3 - t0
        item.read_cursor = 0
        item.write_cursor = FLOW_MOD_LEN
        c.packet_ins = n + 1
        c.flow_mods += 1
        return item

    def append_reply(self, conn: Conn, item: IoBuffer) -> None:
        """IO side: copy a worker's reply into the connection and recycle the item."""
        out = conn.outbuf
        n = item.write_cursor
        if out.free < n:
            self.flush(conn)
            if out.read_cursor:
                out.compact(self.stats)
            if out.free < n:
                grow_exclusive(out, out.capacity * 2, self.stats)
        out.write(memoryview(item.data)[:n], self.stats)
        self.item_pool.release(item)

    def discard_item(self, item: IoBuffer) -> None:
        self.item_pool.release(item)


class ObjectPath(_PathBase):
    pooled = False

    def attach(self, conn: Conn) -> None:
        conn.pending = b""
        conn.out_chunks = []
        conn.out_bytes = 0

    def detach(self, conn: Conn) -> None:
        conn.pending = b""
        conn.out_chunks = []
        conn.out_bytes = 0

    def adopt(self, conn: Conn, previous) -> None:
        pass

    def output_pending(self, conn: Conn) -> int:
        return conn.out_bytes

    def recv(self, conn: Conn) -> None:
        sample = self.counters.packet_ins % self.every == 0
        if sample:
            t0 = perf_counter_ns()
        chunk = conn.sock.recv(self.chunk)
        if not chunk:
            raise PeerClosed()
        if sample:
            self._sample_recv(perf_counter_ns() - t0, len(chunk))
        self.stats.allocations += 1
        if conn.pending:
            conn.pending = conn.pending + chunk
            self.stats.allocations += 1
            self.stats.bytes_copied += len(conn.pending)
        else:
            conn.pending = chunk

    def send_message(self, conn: Conn, msg) -> None:
        wire = ofwire.encode(msg)
        self.stats.allocations += 1
        conn.out_chunks.append(wire)
        conn.out_bytes += len(wire)

    def _next_message(self, data: bytes, pos: int):
        """Slice out one whole message as its own object, or return None."""
        if len(data) - pos < OFP_HEADER_LEN:
            return None
        header = ofwire.parse_header(data, pos)
        if len(data) - pos < header.length:
            return None
        raw = data[pos:pos + header.length]
        self.stats.allocations += 1
        self.stats.bytes_copied += header.length
        return header, raw

    def _answer(self, table, dpid: int, msg: ofwire.PacketIn) -> bytes:
        c = self.counters
        decision = handle_packet_in(table, dpid, msg.in_port,
                                    ofwire.mac_to_int(msg.src_mac),
                                    ofwire.mac_to_int(msg.dst_mac))
        reply = ofwire.learning_flow_mod(msg.xid, msg.in_port, msg.src_mac, msg.dst_mac,
                                         msg.buffer_id, decision.out_port,
                                         self.idle, self.hard)
        wire = ofwire.encode(reply)
        self.stats.allocations += 1
        c.packet_ins += 1
        c.flow_mods += 1
        return wire

    def _decode(self, header, raw: bytes) -> ofwire.PacketIn:
        msg = ofwire.decode_message(header, raw[OFP_HEADER_LEN:])
        # body slice plus the frame copy inside the message
        self.stats.allocations += 2
        self.stats.bytes_copied += 2 * len(raw) - 2 * OFP_HEADER_LEN - 10
        return msg

    def process_input(self, conn: Conn) -> None:
        data = conn.pending
        pos = 0
        c = self.counters
        conn.out_full = False
        try:
            while True:
                if conn.ready and conn.out_bytes >= OUT_HIGH_WATER:
                    conn.out_full = True
                    break
                framed = self._next_message(data, pos)
                if framed is None:
                    break
                header, raw = framed
                if header.msg_type == OfType.PACKET_IN and conn.ready:
                    if self.handshake_only:
                        break
                    if header.length < PEEK_PACKET_IN_LEN:
                        raise TruncatedBody("packet-in too short for an Ethernet header")
                    if c.packet_ins % self.every:
                        msg = self._decode(header, raw)
                        wire = self._answer(self.table, conn.dpid, msg)
                    else:
                        t0 = perf_counter_ns()
                        msg = self._decode(header, raw)
                        t1 = perf_counter_ns()
                        decision = handle_packet_in(self.table, conn.dpid, msg.in_port,
                                                    ofwire.mac_to_int(msg.src_mac),
                                                    ofwire.mac_to_int(msg.dst_mac))
                        t2 = perf_counter_ns()
                        reply = ofwire.learning_flow_mod(
                            msg.xid, msg.in_port, msg.src_mac, msg.dst_mac, msg.buffer_id,
                            decision.out_port, self.idle, self.hard)
                        wire = ofwire.encode(reply)
                        t3 = perf_counter_ns()
                        self.stats.allocations += 1
                        c.packet_ins += 1
                        c.flow_mods += 1
                        c.samples += 1
                        c.decode_ns += t1 - t0
                        c.app_ns += t2 - t1
                        c.encode_ns += t3 - t2
                        c.wall_ns += t3 - t0
                    conn.out_chunks.append(wire)
                    conn.out_bytes += len(wire)
                else:
                    self.control(conn, header, raw[OFP_HEADER_LEN:])
                pos += header.length
        finally:
            if pos:
                conn.pending = data[pos:]
                if conn.pending:
                    self.stats.allocations += 1
                    self.stats.bytes_copied += len(conn.pending)

    def flush(self, conn: Conn) -> None:
        if not conn.out_bytes:
            return
        wire = b"".join(conn.out_chunks)
        self.stats.allocations += 1
        self.stats.bytes_copied += len(wire)
        sample = self.counters.flow_mods % self.every == 0
        if sample:
            t0 = perf_counter_ns()
        try:
            sent = conn.sock.send(wire)
        except (BlockingIOError, InterruptedError):
            sent = 0
        if sample:
            self._sample_io(perf_counter_ns() - t0, sent, FLOW_MOD_LEN)
        rest = wire[sent:]
        if rest:
            self.stats.allocations += 1
            conn.out_chunks = [rest]
        else:
            conn.out_chunks = []
        conn.out_bytes = len(rest)

    # -- queue-based models ------------------------------------------------

    def frame_for_queue(self, conn: Conn, emit) -> bool:
        data = conn.pending
        pos = 0
        ok = True
        try:
            while True:
                framed = self._next_message(data, pos)
                if framed is None:
                    break
                header, raw = framed
                if header.msg_type == OfType.PACKET_IN and conn.ready:
                    if header.length < PEEK_PACKET_IN_LEN:
                        raise TruncatedBody("packet-in too short for an Ethernet header")
                    if not emit(conn, (header, raw)):
                        ok = False
                        break
                else:
                    self.control(conn, header, raw[OFP_HEADER_LEN:])
                pos += header.length
        finally:
            if pos:
                conn.pending = data[pos:]
                if conn.pending:
                    self.stats.allocations += 1
                    self.stats.bytes_copied += len(conn.pending)
        return ok

    def answer_item(self, dpid: int, item) -> bytes:
        header, raw = item
        c = self.counters
        if c.packet_ins % self.every:
            return self._answer(self.table, dpid, self._decode(header, raw))
        t0 = perf_counter_ns()
        msg = self._decode(header, raw)
        t1 = perf_counter_ns()
        decision = handle_packet_in(self.table, dpid, msg.in_port,
                                    ofwire.mac_to_int(msg.src_mac),
                                    ofwire.mac_to_int(msg.dst_mac))
        t2 = perf_counter_ns()
        wire = ofwire.encode(ofwire.learning_flow_mod(
            msg.xid, msg.in_port, msg.src_mac, msg.dst_mac, msg.buffer_id,
            decision.out_port, self.idle, self.hard))
        t3 = perf_counter_ns()
        self.stats.allocations += 1
        c.packet_ins += 1
        c.flow_mods += 1
        c.samples += 1
        c.decode_ns += t1 - t0
        c.app_ns += t2 - t1
        c.encode_ns += t3 - t2
        c.wall_ns += t3 - t0
        return wire

    def append_reply(self, conn: Conn, wire: bytes) -> None:
        conn.out_chunks.append(wire)
        conn.out_bytes += len(wire)

    def discard_item(self, item) -> None:
        pass


def make_path(pool: BufferPool, counters: Counters, table, matrix):
    cls = PooledPath if matrix.pooled else ObjectPath
    return cls(pool, counters, table, matrix)
