"""Run the engine as a child process: spawn, wait for readiness, tear down."""

from __future__ import annotations

import json
import logging
import os
import selectors
import signal
import socket
import subprocess
import sys
import time
from dataclasses import dataclass

from .. import ofwire
from .config import StrategyMatrix

log = logging.getLogger(__name__)

READY_TIMEOUT = 5.0
READY_PREFIX = "OFBENCH_READY"


class EngineStartError(RuntimeError):
    pass


def hello_exchange(host: str, port: int, timeout: float = READY_TIMEOUT) -> bool:
    """True if a TCP connect and a HELLO round trip succeed before ``timeout``."""
    deadline = time.monotonic() + timeout
    while time.monotonic() < deadline:
        try:
            with socket.create_connection((host, port), timeout=0.5) as s:
                s.sendall(ofwire.encode(ofwire.Hello(0)))
                reader = ofwire.FrameReader()
                while time.monotonic() < deadline:
                    s.settimeout(max(deadline - time.monotonic(), 0.01))
                    chunk = s.recv(4096)
                    if not chunk:
                        break
                    for msg in reader.feed(chunk):
                        if msg.msg_type == ofwire.OfType.HELLO:
                            return True
        except OSError:
            time.sleep(0.05)
    return False


def fetch_stats(host: str, port: int, timeout: float = 5.0) -> dict:
    """Read one JSON counters snapshot from an engine's stats port."""
    with socket.create_connection((host, port), timeout=timeout) as s:
        chunks = []
        while True:
            chunk = s.recv(65536)
            if not chunk:
                break
            chunks.append(chunk)
    return json.loads(b"".join(chunks))


def port_is_free(host: str, port: int) -> bool:
    s = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
    s.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
    try:
        s.bind((host, port))
        return True
    except OSError:
        return False
    finally:
        s.close()


def engine_argv(matrix: StrategyMatrix, log_level: str = "WARNING") -> list[str]:
    t = matrix.threading
    argv = [
        sys.executable, "-m", "ofbench", "--log-level", log_level, "engine",
        "--host", matrix.listen_host,
        "--port", str(matrix.listen_port),
        "--stats-port", str(matrix.stats_port),
        "--model", t.kind.value,
        "--workers", str(t.worker_count),
        "--max-workers", str(t.max_workers),
        "--buffers", matrix.buffers.kind.value,
        "--pool-buffer-size", str(matrix.buffers.pool_buffer_size),
        "--pool-depth", str(matrix.buffers.pool_depth),
        "--table", matrix.table.value,
        "--queue-capacity", str(matrix.queue_capacity),
        "--sample-every", str(matrix.sample_every),
        "--announce",
    ]
    if t.pin_threads:
        argv.append("--pin")
    if matrix.audit:
        argv.append("--audit")
    return argv


@dataclass
class EngineProcess:
    proc: subprocess.Popen
    host: str
    port: int
    stats_port: int | None

    def stats(self, timeout: float = 5.0) -> dict:
        if self.stats_port is None:
            raise RuntimeError("engine was started without a stats port")
        return fetch_stats(self.host, self.stats_port, timeout)

    def alive(self) -> bool:
        return self.proc.poll() is None

    def terminate(self, timeout: float = 10.0) -> bool:
        """Stop the engine and return True if its port can be bound again."""
        if self.alive():
            self.proc.send_signal(signal.SIGTERM)
            try:
                self.proc.wait(timeout)
            except subprocess.TimeoutExpired:
                log.warning("event=engine_kill pid=%d", self.proc.pid)
                self.proc.kill()
                self.proc.wait()
        if self.proc.stdout:
            self.proc.stdout.close()
        deadline = time.monotonic() + timeout
        while not port_is_free(self.host, self.port):
            if time.monotonic() > deadline:
                log.error("event=port_leak port=%d", self.port)
                return False
            time.sleep(0.05)
        return True

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.terminate()


def _loopback(host: str) -> str:
    return "127.0.0.1" if host in ("", "0.0.0.0") else host


def spawn_engine(matrix: StrategyMatrix, ready_timeout: float = READY_TIMEOUT,
                 log_level: str = "WARNING", env: dict | None = None) -> EngineProcess:
    """Start ``python -m ofbench engine`` and wait until it answers HELLO."""
    child_env = dict(os.environ if env is None else env)
    src = os.path.dirname(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))
    child_env["PYTHONPATH"] = os.pathsep.join(
        p for p in (src, child_env.get("PYTHONPATH", "")) if p)
    proc = subprocess.Popen(engine_argv(matrix, log_level), stdout=subprocess.PIPE,
                            stdin=subprocess.DEVNULL, env=child_env, text=True)
    deadline = time.monotonic() + ready_timeout
    port = stats_port = None
    sel = selectors.DefaultSelector()
    sel.register(proc.stdout, selectors.EVENT_READ)
    try:
        # the child prints its bound ports once listening (port 0 means ephemeral)
        while port is None:
            left = deadline - time.monotonic()
            if left <= 0 or proc.poll() is not None:
                break
            if sel.select(left):
                line = proc.stdout.readline()
                if line.startswith(READY_PREFIX):
                    fields = dict(kv.split("=", 1) for kv in line.split()[1:])
                    port = int(fields["port"])
                    sp = int(fields.get("stats_port", "-1"))
                    stats_port = sp if sp >= 0 else None
    finally:
        sel.close()
    host = _loopback(matrix.listen_host)
    if port is None or not hello_exchange(host, port, max(deadline - time.monotonic(), 0.5)):
        proc.kill()
        proc.wait()
        raise EngineStartError(f"engine not ready within {ready_timeout}s (rc={proc.returncode})")
    log.info("event=engine_ready pid=%d port=%d", proc.pid, port)
    return EngineProcess(proc, host, port, stats_port)
