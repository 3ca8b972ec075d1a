"""CBench-style switch emulator and load driver.

Each emulator thread owns a disjoint set of switch connections.  A run is a
sequence of loops; in every loop probes are sent only while the loop window is
open, then the thread waits (bounded by ``drain_timeout``) for the controller to
catch up.  Responses are counted by arrival.  Any backlog still outstanding when
a drain times out is counted as ``late`` in the next loop instead of being
credited to it.
"""

from __future__ import annotations

import logging
import selectors
import socket
import struct
import threading
import time
from dataclasses import dataclass, field
from time import perf_counter, perf_counter_ns

from .. import ofwire
from ..ofwire import HEADER, OFP_HEADER_LEN, OfType
from .audit import AuditReport
from .config import BenchConfig, BenchMode
from .probes import PROBE_LEN, write_probes

log = logging.getLogger(__name__)

_FLOW_MOD = int(OfType.FLOW_MOD)
_PACKET_OUT = int(OfType.PACKET_OUT)
_ECHO_REQUEST = int(OfType.ECHO_REQUEST)
_BARRIER_REQUEST = int(OfType.BARRIER_REQUEST)
_FEATURES_REQUEST = int(OfType.FEATURES_REQUEST)
_FLOW_MOD_ADD = int(ofwire.FlowModCommand.ADD)
_U16 = struct.Struct("!H")
_ACTION_HDR = struct.Struct("!HHH")
BATCH = 64
RECV_CHUNK = 1 << 16


class ConnectionLost(Exception):
    pass


class HandshakeTimeout(ConnectionLost):
    pass


@dataclass
class LoopResult:
    loop: int
    probes: int = 0
    responses: int = 0
    flow_mods: int = 0
    packet_outs: int = 0
    other: int = 0
    late: int = 0
    flow_mod_bytes: int = 0
    packet_out_bytes: int = 0
    elapsed: float = 0.0
    window: float = 0.0
    drained: bool = True
    emulator_cpu_s: float = 0.0
    max_outstanding: int = 0
    latencies_us: list[float] = field(default_factory=list)
    engine: dict | None = None

    @property
    def throughput(self) -> float:
        return self.responses / self.elapsed if self.elapsed > 0 else 0.0

    @property
    def audit(self) -> AuditReport:
        return AuditReport(self.flow_mods, self.packet_outs, self.other,
                           self.flow_mod_bytes, self.packet_out_bytes, self.probes)

    def merge(self, other: "LoopResult") -> None:
        for name in ("probes", "responses", "flow_mods", "packet_outs", "other", "late",
                     "flow_mod_bytes", "packet_out_bytes", "emulator_cpu_s"):
            setattr(self, name, getattr(self, name) + getattr(other, name))
        self.elapsed = max(self.elapsed, other.elapsed)
        self.window = max(self.window, other.window)
        self.drained = self.drained and other.drained
        self.max_outstanding = max(self.max_outstanding, other.max_outstanding)
        self.latencies_us.extend(other.latencies_us)

    def as_dict(self) -> dict:
        d = {k: getattr(self, k) for k in (
            "loop", "probes", "responses", "flow_mods", "packet_outs", "other", "late",
            "flow_mod_bytes", "packet_out_bytes", "elapsed", "window", "drained",
            "emulator_cpu_s", "max_outstanding", "latencies_us", "engine")}
        d["throughput"] = self.throughput
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "LoopResult":
        d = {k: v for k, v in d.items() if k != "throughput"}
        return cls(**d)


@dataclass
class RunResult:
    config: BenchConfig
    loops: list[LoopResult] = field(default_factory=list)
    # (switch_id, xid, msg_type, out_port) per response when config.record is set
    responses: list[tuple[int, int, int, int]] | None = None
    reruns: int = 0
    engine_start: dict | None = None
    engine_end: dict | None = None

    @property
    def audit(self) -> AuditReport:
        total = AuditReport(probes=0)
        for loop in self.loops:
            total.add(loop.audit)
        return total

    def as_dict(self) -> dict:
        return {
            "config": self.config.as_dict(),
            "loops": [lp.as_dict() for lp in self.loops],
            "reruns": self.reruns,
            "audit": self.audit.as_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RunResult":
        return cls(BenchConfig.from_dict(d["config"]),
                   [LoopResult.from_dict(x) for x in d["loops"]],
                   reruns=d.get("reruns", 0))


def _first_output_port(data, pos: int, start: int, end: int) -> int:
    """Port of the first output action in ``data[start:end]``, or -1."""
    while start + 4 <= end:
        a_type, a_len, port = _ACTION_HDR.unpack_from(data, pos + start)
        if a_len < 8:
            return -1
        if a_type == ofwire.OFPAT_OUTPUT:
            return port
        start += a_len
    return -1


class _Switch:
    """One emulated switch connection."""

    def __init__(self, switch_id: int, cfg: BenchConfig):
        self.switch_id = switch_id
        self.dpid = switch_id
        self.cfg = cfg
        self.sock: socket.socket | None = None
        self.inbuf = bytearray()
        self.outbuf = bytearray()
        self.seq = 0
        self.probes_total = 0
        self.responses_total = 0
        self.backlog = 0
        self.loop_probes = 0
        self.pending_xid: int | None = None
        self.pending_t0 = 0
        self.events = 0

    @property
    def outstanding(self) -> int:
        return self.probes_total - self.responses_total

    def connect(self, host: str, port: int, timeout: float) -> None:
        deadline = time.monotonic() + timeout
        s = socket.create_connection((host, port), timeout=timeout)
        s.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
        s.sendall(ofwire.encode(ofwire.Hello(0)))
        buf = bytearray()
        done = False
        while not done:
            left = deadline - time.monotonic()
            if left <= 0:
                s.close()
                raise HandshakeTimeout(f"switch {self.switch_id}: no FEATURES_REQUEST")
            s.settimeout(left)
            try:
                chunk = s.recv(4096)
            except socket.timeout as exc:
                s.close()
                raise HandshakeTimeout(f"switch {self.switch_id}: handshake timed out") from exc
            if not chunk:
                s.close()
                raise ConnectionLost(f"switch {self.switch_id}: closed during handshake")
            buf += chunk
            pos = 0
            while not done and len(buf) - pos >= OFP_HEADER_LEN:
                _v, mtype, length, xid = HEADER.unpack_from(buf, pos)
                if length < OFP_HEADER_LEN:
                    s.close()
                    raise ConnectionLost(f"switch {self.switch_id}: controller sent length {length}")
                if len(buf) - pos < length:
                    break
                reply = self._control_reply(mtype, xid, bytes(buf[pos + 8:pos + length]))
                if reply:
                    s.sendall(reply)
                done = mtype == _FEATURES_REQUEST
                pos += length
            del buf[:pos]
        # anything read past the features request is handled by the loop
        self.inbuf = buf
        s.setblocking(False)
        self.sock = s

    def _control_reply(self, msg_type: int, xid: int, data: bytes = b"") -> bytes:
        if msg_type == _FEATURES_REQUEST:
            return ofwire.encode(ofwire.FeaturesReply(
                xid, self.dpid, 256, 1, 0, 1 << ofwire.OFPAT_OUTPUT,
                tuple(ofwire.PhyPort(p, (self.switch_id << 32 | p).to_bytes(6, "big"),
                                     f"s{self.switch_id}-eth{p}".encode()[:16].ljust(16, b"\0"))
                      for p in range(1, 5))))
        if msg_type == _ECHO_REQUEST:
            return ofwire.encode(ofwire.EchoReply(xid, data))
        if msg_type == _BARRIER_REQUEST:
            return HEADER.pack(ofwire.OFP_VERSION, OfType.BARRIER_REPLY, OFP_HEADER_LEN, xid)
        return b""

    def close(self) -> None:
        if self.sock is not None:
            try:
                self.sock.close()
            except OSError:
                pass
            self.sock = None


class _EmulatorThread(threading.Thread):
    def __init__(self, driver: "Emulator", index: int, switches: list[_Switch]):
        super().__init__(name=f"ofbench-emu-{index}", daemon=True)
        self.driver = driver
        self.index = index
        self.switches = switches
        self.cfg = driver.cfg
        self.result: LoopResult | None = None
        self.error: BaseException | None = None
        self.records: list | None = [] if self.cfg.record else None
        self.sel = selectors.DefaultSelector()

    def run(self) -> None:
        d = self.driver
        for sw in self.switches:
            self.sel.register(sw.sock, selectors.EVENT_READ, sw)
            sw.events = selectors.EVENT_READ
        try:
            while True:
                d.barrier.wait()
                plan = d.plan
                if plan is None:
                    return
                self.result = None
                self.error = None
                try:
                    self.result = self._run_loop(*plan)
                except BaseException as exc:  # reported to the driver, never swallowed
                    self.error = exc
                d.barrier.wait()
        except threading.BrokenBarrierError:
            return
        finally:
            self.sel.close()

    # -- io --------------------------------------------------------------

    def _want(self, sw: _Switch, write: bool) -> None:
        ev = selectors.EVENT_READ | (selectors.EVENT_WRITE if write else 0)
        if ev != sw.events:
            self.sel.modify(sw.sock, ev, sw)
            sw.events = ev

    def _flush(self, sw: _Switch) -> None:
        if sw.outbuf:
            try:
                sent = sw.sock.send(sw.outbuf)
            except (BlockingIOError, InterruptedError):
                sent = 0
            except OSError as exc:
                raise ConnectionLost(f"switch {sw.switch_id}: {exc}") from exc
            if sent:
                del sw.outbuf[:sent]
        self._want(sw, bool(sw.outbuf))

    def _fill(self, sw: _Switch, res: LoopResult, count: int) -> None:
        cfg = self.cfg
        if cfg.max_probes is not None:
            count = min(count, cfg.max_probes - sw.loop_probes)
        if count <= 0:
            return
        write_probes(sw.outbuf, sw.switch_id, sw.seq, count, cfg.unique_macs)
        if cfg.mode is BenchMode.LATENCY:
            sw.pending_xid = sw.seq & 0xFFFFFFFF
            sw.pending_t0 = perf_counter_ns()
        sw.seq += count
        sw.loop_probes += count
        sw.probes_total += count
        res.probes += count
        if sw.outstanding > res.max_outstanding:
            res.max_outstanding = sw.outstanding

    def _read(self, sw: _Switch, res: LoopResult) -> None:
        try:
            chunk = sw.sock.recv(RECV_CHUNK)
        except (BlockingIOError, InterruptedError):
            return
        except OSError as exc:
            raise ConnectionLost(f"switch {sw.switch_id}: {exc}") from exc
        if not chunk:
            raise ConnectionLost(f"switch {sw.switch_id}: controller closed the connection")
        sw.inbuf += chunk
        self._consume(sw, res)

    def _consume(self, sw: _Switch, res: LoopResult) -> None:
        data = sw.inbuf
        pos = 0
        end = len(data)
        latency = self.cfg.mode is BenchMode.LATENCY
        records = self.records
        replies = b""
        while end - pos >= OFP_HEADER_LEN:
            _v, mtype, length, xid = HEADER.unpack_from(data, pos)
            if length < OFP_HEADER_LEN:
                raise ConnectionLost(f"switch {sw.switch_id}: controller sent length {length}")
            if end - pos < length:
                break
            if mtype == _FLOW_MOD and length >= ofwire.FLOW_MOD_FIXED_LEN and \
                    _U16.unpack_from(data, pos + 56)[0] != _FLOW_MOD_ADD:
                # table-maintenance flow-mods are not answers to probes
                res.other += 1
            elif mtype == _FLOW_MOD or mtype == _PACKET_OUT:
                sw.responses_total += 1
                if sw.backlog:
                    sw.backlog -= 1
                    res.late += 1
                else:
                    res.responses += 1
                    if mtype == _FLOW_MOD:
                        res.flow_mods += 1
                        res.flow_mod_bytes += length
                    else:
                        res.packet_outs += 1
                        res.packet_out_bytes += length
                if records is not None:
                    if mtype == _FLOW_MOD:
                        port = _first_output_port(data, pos, ofwire.FLOW_MOD_FIXED_LEN, length)
                    else:
                        (alen,) = _U16.unpack_from(data, pos + 14)
                        port = _first_output_port(data, pos, ofwire.PACKET_OUT_FIXED_LEN,
                                                  min(length, ofwire.PACKET_OUT_FIXED_LEN + alen))
                    records.append((sw.switch_id, xid, mtype, port))
                if latency and sw.pending_xid is not None and xid == sw.pending_xid:
                    res.latencies_us.append((perf_counter_ns() - sw.pending_t0) / 1000.0)
                    sw.pending_xid = None
            else:
                res.other += 1
                replies += sw._control_reply(mtype, xid, bytes(data[pos + 8:pos + length]))
            pos += length
        if pos:
            del data[:pos]
        if replies:
            sw.outbuf += replies

    # -- one loop ----------------------------------------------------------

    def _run_loop(self, loop: int, start: float, deadline: float, drain_deadline: float,
                  send: bool) -> LoopResult:
        cfg = self.cfg
        res = LoopResult(loop)
        cpu0 = time.thread_time()
        latency = cfg.mode is BenchMode.LATENCY
        for sw in self.switches:
            # anything still unanswered from earlier loops is not this loop's work
            sw.backlog = max(sw.outstanding, 0)
            sw.loop_probes = 0
            sw.pending_xid = None
            if sw.inbuf:
                self._consume(sw, res)
        while perf_counter() < start:
            time.sleep(min(start - perf_counter(), 0.001))
        sel = self.sel
        if send and deadline > start:
            for sw in self.switches:
                self._fill(sw, res, 1 if latency else min(cfg.window, BATCH))
                self._flush(sw)
        # with send=False the window still runs its course (the -D delay), silently
        window_open = deadline > start
        while True:
            now = perf_counter()
            if window_open and now >= deadline:
                window_open = False
                res.window = now - start
            if not window_open:
                if all(sw.outstanding <= 0 and not sw.outbuf for sw in self.switches):
                    break
                if now >= drain_deadline:
                    res.drained = False
                    break
            timeout = (deadline if window_open else drain_deadline) - now
            for key, mask in sel.select(max(min(timeout, 0.05), 0)):
                sw = key.data
                if mask & selectors.EVENT_READ:
                    self._read(sw, res)
                if window_open and send:
                    if latency:
                        if sw.pending_xid is None:
                            self._fill(sw, res, 1)
                    else:
                        room = cfg.window - sw.outstanding
                        if room > 0 and len(sw.outbuf) < BATCH * PROBE_LEN:
                            self._fill(sw, res, min(room, BATCH))
                self._flush(sw)
            if window_open and (latency or not send):
                continue
            if window_open:
                # keep idle-but-writable sockets fed
                for sw in self.switches:
                    if not sw.outbuf and sw.outstanding < cfg.window:
                        self._fill(sw, res, min(cfg.window - sw.outstanding, BATCH))
                        self._flush(sw)
        end = perf_counter()
        if not res.window:
            res.window = max(min(deadline, end) - start, 0.0)
        res.elapsed = max(end - start, 0.0) if res.probes else res.window
        res.emulator_cpu_s = time.thread_time() - cpu0
        return res


class Emulator:
    """Drives ``config.switches`` emulated switches against one controller."""

    def __init__(self, cfg: BenchConfig, stats_fn=None):
        self.cfg = cfg
        self.stats_fn = stats_fn
        self.switches: list[_Switch] = []
        self.threads: list[_EmulatorThread] = []
        self.barrier: threading.Barrier | None = None
        self.plan = None

    def connect(self) -> None:
        cfg = self.cfg
        host, port = cfg.address
        self.switches = [_Switch(i, cfg) for i in range(1, cfg.switches + 1)]
        try:
            for sw in self.switches:
                sw.connect(host, port, cfg.connect_timeout)
        except OSError as exc:
            self.close()
            raise ConnectionLost(f"cannot reach controller at {host}:{port}: {exc}") from exc
        except ConnectionLost:
            self.close()
            raise
        n = min(cfg.worker_threads, len(self.switches))
        self.barrier = threading.Barrier(n + 1)
        self.threads = [_EmulatorThread(self, i, self.switches[i::n]) for i in range(n)]
        for t in self.threads:
            t.start()
        log.info("event=switches_connected count=%d threads=%d", len(self.switches), n)

    def run_loop(self, loop: int, duration: float, send: bool = True) -> LoopResult:
        start = perf_counter() + 0.002
        deadline = start + duration
        self.plan = (loop, start, deadline, deadline + self.cfg.drain_timeout, send)
        self.barrier.wait()
        self.barrier.wait()
        total = LoopResult(loop)
        errors = [t.error for t in self.threads if t.error is not None]
        if errors:
            raise errors[0]
        for t in self.threads:
            total.merge(t.result)
        if not total.drained:
            log.warning("event=drain_timeout loop=%d outstanding=%d", loop,
                        sum(sw.outstanding for sw in self.switches))
        return total

    @property
    def records(self) -> list | None:
        if not self.cfg.record:
            return None
        out = []
        for t in self.threads:
            out.extend(t.records)
        return out

    def close(self) -> None:
        if self.barrier is not None and self.threads:
            self.plan = None
            try:
                self.barrier.wait(timeout=self.cfg.drain_timeout + 5)
            except threading.BrokenBarrierError:
                pass
            for t in self.threads:
                t.join(5)
        for sw in self.switches:
            sw.close()
        self.threads = []


def _diff(before: dict | None, after: dict | None) -> dict | None:
    if before is None or after is None:
        return None
    out = {}
    for k, v in after.items():
        b = before.get(k)
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            if isinstance(v, dict) and isinstance(b, dict):
                sub = _diff(b, v)
                if sub:
                    out[k] = sub
            continue
        out[k] = v - (b or 0)
    return out


def run_bench(cfg: BenchConfig, stats_fn=None) -> RunResult:
    """Run ``cfg.loops`` loops; ``stats_fn()`` (optional) returns engine counters."""
    result = RunResult(cfg)
    records: list = []
    reruns = 0
    loop = 0
    emu = None
    try:
        while loop < cfg.loops:
            if emu is None:
                emu = Emulator(cfg, stats_fn)
                emu.connect()
                if cfg.handshake_delay_ms:
                    # let the controller settle; answer echoes while waiting
                    emu.run_loop(-1, cfg.handshake_delay_ms / 1000.0, send=False)
                if result.engine_start is None and stats_fn is not None:
                    result.engine_start = stats_fn()
            before = stats_fn() if stats_fn is not None else None
            try:
                lr = emu.run_loop(loop, cfg.loop_duration)
            except ConnectionLost as exc:
                reruns += 1
                log.warning("event=loop_invalid loop=%d reason=%s rerun=%d", loop, exc, reruns)
                if emu.records:
                    records.extend(emu.records)
                emu.close()
                emu = None
                if reruns > cfg.max_reruns:
                    raise
                continue
            lr.engine = _diff(before, stats_fn() if stats_fn is not None else None)
            log.info("event=loop_done loop=%d probes=%d responses=%d rps=%.1f drained=%s",
                     loop, lr.probes, lr.responses, lr.throughput, lr.drained)
            result.loops.append(lr)
            loop += 1
    finally:
        if emu is not None:
            if emu.records:
                records.extend(emu.records)
            emu.close()
    if stats_fn is not None:
        result.engine_end = stats_fn()
    result.reruns = reruns
    if cfg.record:
        result.responses = records
    return result
