"""Controller runtime: listener, handshake, and the three threading models.

* ``RUN_TO_COMPLETION`` -- an acceptor thread completes each handshake and then
  hands the connection, once, to worker ``datapath_id % workers``.  That worker
  reads, decides, encodes and writes; no per-packet hand-off.
* ``SINGLE_IO_QUEUE`` -- one IO thread owns every socket.  Each packet-in goes to
  a shared bounded work queue, a worker answers it, and the reply comes back
  through a reply queue for the IO thread to write.
* ``SHARED_POOL_QUEUE`` -- all workers share one selector, but only one of them
  may poll it at a time.  The poller moves ready connections onto a shared queue
  and any worker may pick them up and serve them end to end.
"""

from __future__ import annotations

import json
import logging
import queue
import selectors
import signal
import socket
import threading
import time

from ..bufferpool import BufferPool, BufferStrategy
from ..learnswitch import ShardedTable, TableStrategy, make_table
from ..ofwire import MalformedLength, OfWireError
from .affinity import available_cores, pin_worker
from .config import ModelKind, StrategyMatrix
from .counters import Counters, merge_all
from .handshake import ProtocolError
from .paths import Conn, PeerClosed, make_path

log = logging.getLogger(__name__)

EVENT_READ = selectors.EVENT_READ
EVENT_WRITE = selectors.EVENT_WRITE
POLL_TIMEOUT = 0.05
_LISTENER = object()
_WAKE = object()


class BindFailure(OSError):
    pass


class _Waker:
    def __init__(self):
        self.r, self.w = socket.socketpair()
        self.r.setblocking(False)
        self.w.setblocking(False)
        self.pending = False

    def wake(self) -> None:
        if not self.pending:
            self.pending = True
            try:
                self.w.send(b"\0")
            except (BlockingIOError, OSError):
                pass

    def drain(self) -> None:
        self.pending = False
        try:
            while self.r.recv(4096):
                pass
        except (BlockingIOError, OSError):
            pass

    def close(self) -> None:
        self.r.close()
        self.w.close()


class _Ctx:
    """Everything one engine thread owns: pool, counters and codec path."""

    def __init__(self, engine: "Engine", index: int, items: int = 0):
        m = engine.matrix
        self.index = index
        self.counters = Counters()
        self.pool = BufferPool(m.buffers, self.counters.alloc, audit=m.audit)
        self.path = make_path(self.pool, self.counters, engine.table, m)
        if items and m.pooled:
            # one small buffer per queue slot; packet-ins rarely exceed 128 bytes
            self.path.item_pool = BufferPool(
                BufferStrategy(m.buffers.kind, 128, max(items, 2)),
                self.counters.alloc, audit=m.audit)


class Engine:
    def __init__(self, matrix: StrategyMatrix):
        self.matrix = matrix
        tm = matrix.threading
        self.workers = tm.worker_count
        if matrix.table is TableStrategy.SHARDED_PER_WORKER:
            self.table = ShardedTable(self.workers, audit=matrix.audit)
        else:
            self.table = make_table(matrix.table)
        self.running = False
        self._threads: list[threading.Thread] = []
        self._ctxs: list[_Ctx] = []
        self._listener: socket.socket | None = None
        self._stats_listener: socket.socket | None = None
        self._conn_lock = threading.Lock()
        self._open_conns: set[Conn] = set()
        self.connections_accepted = 0
        self.connections_closed = 0
        self.started_at = None
        self._cores = available_cores()

    # -- lifecycle -----------------------------------------------------------

    @property
    def address(self) -> tuple[str, int]:
        return self._listener.getsockname()[:2]

    @property
    def stats_address(self) -> tuple[str, int] | None:
        if self._stats_listener is None:
            return None
        return self._stats_listener.getsockname()[:2]

    def _bind(self, host: str, port: int) -> socket.socket:
        s = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        s.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        try:
            s.bind((host, port))
        except OSError as exc:
            s.close()
            raise BindFailure(exc.errno, f"cannot bind {host}:{port}: {exc.strerror}") from exc
        s.listen(1024)
        s.setblocking(False)
        return s

    def start(self) -> "Engine":
        m = self.matrix
        self._listener = self._bind(m.listen_host, m.listen_port)
        if m.stats_port >= 0:
            self._stats_listener = self._bind(m.listen_host, max(m.stats_port, 0))
        self.running = True
        self.started_at = time.monotonic()
        kind = m.threading.kind
        if kind is ModelKind.RUN_TO_COMPLETION:
            self._start_rtc()
        elif kind is ModelKind.SINGLE_IO_QUEUE:
            self._start_siq()
        else:
            self._start_spq()
        if self._stats_listener is not None:
            self._spawn("stats", self._stats_loop)
        host, port = self.address
        log.info("event=engine_started host=%s port=%d model=%s workers=%d buffers=%s table=%s",
                 host, port, kind.value, self.workers, m.buffers.kind.value, m.table.value)
        return self

    def stop(self, timeout: float = 5.0) -> None:
        if not self.running:
            return
        self.running = False
        for waker in getattr(self, "_wakers", []):
            waker.wake()
        for t in self._threads:
            if t is not threading.current_thread():
                t.join(timeout)
        with self._conn_lock:
            leftovers = list(self._open_conns)
        for conn in leftovers:
            try:
                conn.sock.close()
            except OSError:
                pass
        for s in (self._listener, self._stats_listener):
            if s is not None:
                s.close()
        sel = getattr(self, "_sel", None)
        if sel is not None:
            sel.close()
        for waker in getattr(self, "_wakers", []):
            waker.close()
        snap = self.snapshot()
        log.info("event=engine_stopped packet_ins=%d flow_mods=%d protocol_errors=%d",
                 snap["packet_ins"], snap["flow_mods"], snap["protocol_errors"])

    def serve_forever(self) -> None:
        """Block until SIGINT/SIGTERM, then shut down cleanly."""
        stop = threading.Event()

        def _handler(signum, frame):
            stop.set()

        old = {sig: signal.signal(sig, _handler) for sig in (signal.SIGINT, signal.SIGTERM)}
        try:
            if not self.running:
                self.start()
            while not stop.wait(0.2):
                pass
        finally:
            for sig, h in old.items():
                signal.signal(sig, h)
            self.stop()

    def __enter__(self):
        return self.start()

    def __exit__(self, *exc):
        self.stop()

    def _spawn(self, name: str, target, *args) -> threading.Thread:
        t = threading.Thread(target=target, args=args, name=f"ofbench-{name}", daemon=True)
        self._threads.append(t)
        t.start()
        return t

    def _pin(self, worker_index: int) -> None:
        if self.matrix.threading.pin_threads:
            pin_worker(worker_index, self._cores)

    # -- stats ---------------------------------------------------------------

    def snapshot(self) -> dict:
        total = merge_all(ctx.counters for ctx in self._ctxs)
        out = total.as_dict()
        out.update(
            table_entries=len(self.table),
            lock_acquisitions=self.table.lock_acquisitions,
            connections_accepted=self.connections_accepted,
            connections_closed=self.connections_closed,
            connections_open=len(self._open_conns),
            uptime_s=(time.monotonic() - self.started_at) if self.started_at else 0.0,
            # whole-process CPU; includes a co-resident harness when run in-process
            cpu_ns=time.process_time_ns(),
            config=self.matrix.as_dict(),
        )
        return out

    def _stats_loop(self) -> None:
        sel = selectors.DefaultSelector()
        sel.register(self._stats_listener, EVENT_READ)
        while self.running:
            if not sel.select(POLL_TIMEOUT):
                continue
            try:
                client, _ = self._stats_listener.accept()
            except (BlockingIOError, OSError):
                continue
            try:
                client.setblocking(True)
                client.sendall(json.dumps(self.snapshot()).encode() + b"\n")
            except OSError:
                pass
            finally:
                client.close()
        sel.close()

    # -- shared connection plumbing -----------------------------------------

    def _accept(self, ctx: _Ctx) -> Conn | None:
        try:
            sock, peer = self._listener.accept()
        except (BlockingIOError, InterruptedError, OSError):
            return None
        sock.setblocking(False)
        sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
        conn = Conn(sock, peer)
        ctx.path.attach(conn)
        conn.order_lock = threading.Lock()
        with self._conn_lock:
            self._open_conns.add(conn)
            self.connections_accepted += 1
        log.debug("event=conn_accepted peer=%s", peer)
        return conn

    def _close(self, ctx: _Ctx, conn: Conn, reason: str, sel=None) -> None:
        if conn.closed:
            return
        conn.closed = True
        if sel is not None:
            try:
                sel.unregister(conn.sock)
            except (KeyError, ValueError, OSError):
                pass
        try:
            conn.sock.close()
        except OSError:
            pass
        with conn.order_lock:
            ctx.path.detach(conn)
        with self._conn_lock:
            self._open_conns.discard(conn)
            self.connections_closed += 1
        if reason != "peer_closed":
            log.info("event=conn_closed peer=%s dpid=%s reason=%s", conn.peer, conn.dpid, reason)

    def _fail(self, ctx: _Ctx, conn: Conn, exc: Exception, sel=None) -> None:
        ctx.counters.protocol_errors += 1
        if isinstance(exc, MalformedLength):
            ctx.counters.malformed_closes += 1
        self._close(ctx, conn, f"{type(exc).__name__}: {exc}", sel)

    def _service(self, ctx: _Ctx, conn: Conn, readable: bool, sel=None) -> None:
        """Read (optionally), answer and write until blocked.  Closes on error."""
        path = ctx.path
        try:
            if readable and not conn.out_full:
                path.recv(conn)
            while True:
                path.process_input(conn)
                path.flush(conn)
                if conn.out_full and not path.output_pending(conn):
                    continue
                break
        except (BlockingIOError, InterruptedError):
            pass
        except PeerClosed:
            self._close(ctx, conn, "peer_closed", sel)
        except (OfWireError, ProtocolError) as exc:
            self._fail(ctx, conn, exc, sel)
        except (ConnectionError, OSError) as exc:
            self._close(ctx, conn, f"io_error: {exc}", sel)
        if conn.out_full:
            ctx.counters.backpressure_pauses += 1

    def _wanted(self, ctx: _Ctx, conn: Conn) -> int:
        ev = 0 if conn.out_full else EVENT_READ
        if ctx.path.output_pending(conn):
            ev |= EVENT_WRITE
        return ev

    def _rearm(self, sel, ctx: _Ctx, conn: Conn) -> None:
        if conn.closed:
            return
        want = self._wanted(ctx, conn) or EVENT_READ
        if want != conn.events:
            registered = conn.events
            # publish before registering: a concurrent poller may fire and reset it at once
            conn.events = want
            try:
                if registered:
                    sel.modify(conn.sock, want, conn)
                else:
                    sel.register(conn.sock, want, conn)
            except (KeyError, ValueError, OSError):
                self._close(ctx, conn, "selector_error", sel)

    # -- RUN_TO_COMPLETION ----------------------------------------------------

    def _start_rtc(self) -> None:
        self._inboxes = [queue.SimpleQueue() for _ in range(self.workers)]
        self._wakers = [_Waker() for _ in range(self.workers)]
        self._ctxs = [_Ctx(self, i) for i in range(self.workers)]
        acceptor = _Ctx(self, -1)
        acceptor.path.handshake_only = True
        self._ctxs.append(acceptor)
        for i in range(self.workers):
            self._spawn(f"worker-{i}", self._rtc_worker, i)
        self._spawn("acceptor", self._rtc_acceptor, acceptor)

    def _rtc_acceptor(self, ctx: _Ctx) -> None:
        sel = selectors.DefaultSelector()
        sel.register(self._listener, EVENT_READ, _LISTENER)
        while self.running:
            for key, mask in sel.select(POLL_TIMEOUT):
                if key.data is _LISTENER:
                    while True:
                        conn = self._accept(ctx)
                        if conn is None:
                            break
                        self._rearm(sel, ctx, conn)
                    continue
                conn = key.data
                self._service(ctx, conn, bool(mask & EVENT_READ), sel)
                if conn.closed:
                    continue
                if conn.ready and not ctx.path.output_pending(conn):
                    sel.unregister(conn.sock)
                    conn.events = 0
                    target = conn.dpid % self.workers
                    conn.owner = target
                    ctx.counters.conn_migrations += 1
                    log.debug("event=conn_migrated dpid=%d worker=%d", conn.dpid, target)
                    self._inboxes[target].put(conn)
                    self._wakers[target].wake()
                else:
                    self._rearm(sel, ctx, conn)
        for key in list(sel.get_map().values()):
            if isinstance(key.data, Conn):
                self._close(ctx, key.data, "shutdown", sel)
        sel.close()

    def _rtc_worker(self, index: int) -> None:
        self._pin(index)
        ctx = self._ctxs[index]
        if isinstance(self.table, ShardedTable):
            self.table.bind(index)
        inbox = self._inboxes[index]
        waker = self._wakers[index]
        sel = selectors.DefaultSelector()
        sel.register(waker.r, EVENT_READ, _WAKE)
        while self.running:
            for key, mask in sel.select(POLL_TIMEOUT):
                if key.data is _WAKE:
                    waker.drain()
                    while True:
                        try:
                            conn = inbox.get_nowait()
                        except queue.Empty:
                            break
                        ctx.path.adopt(conn, self._ctxs[-1].path)
                        # bytes that arrived with the handshake may already hold packet-ins
                        self._service(ctx, conn, False)
                        self._rearm(sel, ctx, conn)
                    continue
                conn = key.data
                self._service(ctx, conn, bool(mask & EVENT_READ), sel)
                self._rearm(sel, ctx, conn)
        for key in list(sel.get_map().values()):
            if isinstance(key.data, Conn):
                ctx.path.flush(key.data)
                self._close(ctx, key.data, "shutdown", sel)
        sel.close()

    # -- SINGLE_IO_QUEUE ------------------------------------------------------

    def _start_siq(self) -> None:
        cap = self.matrix.queue_capacity
        self._work_q: queue.Queue = queue.Queue(maxsize=cap)
        self._reply_q: queue.SimpleQueue = queue.SimpleQueue()
        self._wakers = [_Waker()]
        self._ctxs = [_Ctx(self, i) for i in range(self.workers)]
        io_ctx = _Ctx(self, -1, items=cap)
        self._ctxs.append(io_ctx)
        for i in range(self.workers):
            self._spawn(f"worker-{i}", self._siq_worker, i)
        self._spawn("io", self._siq_io, io_ctx)

    def _siq_io(self, ctx: _Ctx) -> None:
        sel = selectors.DefaultSelector()
        sel.register(self._listener, EVENT_READ, _LISTENER)
        waker = self._wakers[0]
        sel.register(waker.r, EVENT_READ, _WAKE)
        path = ctx.path
        work_q = self._work_q
        counters = ctx.counters
        paused: set[Conn] = set()
        dirty: set[Conn] = set()

        def emit(conn: Conn, item) -> bool:
            try:
                work_q.put_nowait((conn, conn.enq_seq, item))
            except queue.Full:
                return False
            conn.enq_seq += 1
            counters.handoffs += 1
            return True

        def frame(conn: Conn) -> None:
            try:
                ok = path.frame_for_queue(conn, emit)
            except (OfWireError, ProtocolError) as exc:
                self._fail(ctx, conn, exc, sel)
                paused.discard(conn)
                return
            if ok:
                if conn.paused:
                    conn.paused = False
                    paused.discard(conn)
            else:
                if not conn.paused:
                    counters.backpressure_pauses += 1
                conn.paused = True
                paused.add(conn)
            dirty.add(conn)

        while self.running:
            for key, mask in sel.select(POLL_TIMEOUT):
                data = key.data
                if data is _LISTENER:
                    while True:
                        conn = self._accept(ctx)
                        if conn is None:
                            break
                        sel.register(conn.sock, EVENT_READ, conn)
                        conn.events = EVENT_READ
                    continue
                if data is _WAKE:
                    waker.drain()
                    continue
                conn = data
                if mask & EVENT_WRITE:
                    dirty.add(conn)
                if mask & EVENT_READ and not conn.paused:
                    try:
                        path.recv(conn)
                    except (BlockingIOError, InterruptedError):
                        continue
                    except PeerClosed:
                        self._close(ctx, conn, "peer_closed", sel)
                        continue
                    except (ConnectionError, OSError) as exc:
                        self._close(ctx, conn, f"io_error: {exc}", sel)
                        continue
                    frame(conn)
            # replies back from workers
            while True:
                try:
                    conn, reply = self._reply_q.get_nowait()
                except queue.Empty:
                    break
                if conn.closed:
                    path.discard_item(reply)
                    continue
                path.append_reply(conn, reply)
                dirty.add(conn)
            for conn in list(paused):
                if not conn.closed:
                    frame(conn)
            for conn in dirty:
                if conn.closed:
                    continue
                try:
                    path.flush(conn)
                except (ConnectionError, OSError) as exc:
                    self._close(ctx, conn, f"io_error: {exc}", sel)
                    continue
                want = (0 if conn.paused else EVENT_READ)
                if path.output_pending(conn):
                    want |= EVENT_WRITE
                want = want or EVENT_READ
                if want != conn.events:
                    sel.modify(conn.sock, want, conn)
                    conn.events = want
            dirty.clear()
        for key in list(sel.get_map().values()):
            if isinstance(key.data, Conn):
                self._close(ctx, key.data, "shutdown", sel)
        sel.close()

    def _siq_worker(self, index: int) -> None:
        self._pin(index)
        ctx = self._ctxs[index]
        path = ctx.path
        counters = ctx.counters
        work_q = self._work_q
        reply_q = self._reply_q
        waker = self._wakers[0]
        while self.running:
            try:
                conn, seq, item = work_q.get(timeout=POLL_TIMEOUT)
            except queue.Empty:
                continue
            # answers for one connection must follow its arrival order
            with conn.order_lock:
                if conn.closed:
                    # the IO thread owns the item's buffer; send it back to be recycled
                    reply_q.put((conn, item))
                    for late in conn.parked.values():
                        reply_q.put((conn, late))
                    conn.parked.clear()
                    waker.wake()
                    continue
                if seq != conn.next_seq:
                    conn.parked[seq] = item
                    continue
                while True:
                    reply = path.answer_item(conn.dpid, item)
                    reply_q.put((conn, reply))
                    counters.handoffs += 1
                    conn.next_seq += 1
                    item = conn.parked.pop(conn.next_seq, None)
                    if item is None:
                        break
            waker.wake()

    # -- SHARED_POOL_QUEUE ----------------------------------------------------

    def _start_spq(self) -> None:
        self._sel = selectors.DefaultSelector()
        self._sel.register(self._listener, EVENT_READ, _LISTENER)
        self._poll_lock = threading.Lock()
        self._ready_q: queue.SimpleQueue = queue.SimpleQueue()
        self._wakers = []
        self._ctxs = [_Ctx(self, i) for i in range(self.workers)]
        for i in range(self.workers):
            self._spawn(f"worker-{i}", self._spq_worker, i)

    def _spq_worker(self, index: int) -> None:
        self._pin(index)
        ctx = self._ctxs[index]
        sel = self._sel
        ready_q = self._ready_q
        poll_lock = self._poll_lock
        counters = ctx.counters
        while self.running:
            try:
                conn, readable = ready_q.get_nowait()
            except queue.Empty:
                # only one thread may wait on the selector at a time
                if not poll_lock.acquire(timeout=POLL_TIMEOUT):
                    continue
                try:
                    events = sel.select(POLL_TIMEOUT)
                    for key, mask in events:
                        if key.data is _LISTENER:
                            while True:
                                conn = self._accept(ctx)
                                if conn is None:
                                    break
                                sel.register(conn.sock, EVENT_READ, conn)
                                conn.events = EVENT_READ
                            continue
                        conn = key.data
                        # take it out of the poll set while someone is serving it
                        try:
                            sel.unregister(conn.sock)
                        except (KeyError, ValueError):
                            continue
                        conn.events = 0
                        ready_q.put((conn, bool(mask & EVENT_READ)))
                        counters.handoffs += 1
                finally:
                    poll_lock.release()
                continue
            if conn.closed:
                continue
            if conn.owner != index:
                if conn.owner is not None:
                    ctx.path.adopt(conn, self._ctxs[conn.owner].path)
                conn.owner = index
            self._service(ctx, conn, readable)
            if not conn.closed:
                # epoll accepts registrations while another thread is waiting on it
                self._rearm(sel, ctx, conn)


def run_engine(matrix: StrategyMatrix) -> None:
    """Run until SIGINT/SIGTERM."""
    Engine(matrix).serve_forever()
