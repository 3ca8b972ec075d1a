from __future__ import annotations

import socket
import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from ofbench import ofwire  # noqa: E402
from ofbench.bufferpool import BufferKind, BufferStrategy  # noqa: E402
from ofbench.engine import Engine, ModelKind, StrategyMatrix, ThreadingModel  # noqa: E402
from ofbench.learnswitch import TableStrategy  # noqa: E402


def free_port() -> int:
    s = socket.socket()
    s.bind(("127.0.0.1", 0))
    port = s.getsockname()[1]
    s.close()
    return port


def make_matrix(kind: ModelKind = ModelKind.RUN_TO_COMPLETION, workers: int = 2,
                buffers: BufferKind = BufferKind.PREALLOCATED_POOL,
                table: TableStrategy | None = None, **kw) -> StrategyMatrix:
    if table is None:
        table = (TableStrategy.SHARDED_PER_WORKER if kind is ModelKind.RUN_TO_COMPLETION
                 else TableStrategy.SHARED_LOCKED)
    kw.setdefault("listen_port", 0)
    kw.setdefault("listen_host", "127.0.0.1")
    return StrategyMatrix(ThreadingModel(kind, workers), BufferStrategy(buffers), table, **kw)


@pytest.fixture
def engine_factory():
    started: list[Engine] = []

    def start(**kw) -> Engine:
        e = Engine(make_matrix(**kw)).start()
        started.append(e)
        return e

    yield start
    for e in started:
        e.stop()


class RawSwitch:
    """Blocking hand-rolled switch for protocol-level engine tests."""

    def __init__(self, port: int, dpid: int, timeout: float = 5.0):
        self.sock = socket.create_connection(("127.0.0.1", port), timeout=timeout)
        self.reader = ofwire.FrameReader()
        self.dpid = dpid
        self.sock.sendall(ofwire.encode(ofwire.Hello(0)))
        seen = self.read_until(lambda m: m.msg_type == ofwire.OfType.FEATURES_REQUEST)
        self.greeting = seen
        self.sock.sendall(ofwire.encode(ofwire.FeaturesReply(seen[-1].xid, dpid)))

    def read_until(self, done, limit: int = 1 << 20) -> list:
        got = []
        while True:
            chunk = self.sock.recv(65536)
            if not chunk:
                raise ConnectionError("peer closed")
            for m in self.reader.feed(chunk):
                got.append(m)
                if done(m):
                    return got

    def read_n(self, n: int) -> list:
        got = []
        while len(got) < n:
            chunk = self.sock.recv(65536)
            if not chunk:
                raise ConnectionError("peer closed")
            got.extend(self.reader.feed(chunk))
        return got

    def send(self, data: bytes) -> None:
        self.sock.sendall(data)

    def close(self) -> None:
        self.sock.close()


# -- acceptance bookkeeping --------------------------------------------------------

ACCEPTANCE: dict[int, tuple[str, str]] = {}


class Criterion:
    """Collects every check of one criterion so a failure still reports all numbers."""

    def __init__(self, number: int, merge: bool = False):
        self.number = number
        # parametrised criteria append each case to one summary line
        self.merge = merge
        self.notes: list[str] = []
        self.failures: list[str] = []

    def note(self, text: str) -> None:
        self.notes.append(text)

    def check(self, ok: bool, text: str) -> bool:
        (self.notes if ok else self.failures).append(text)
        return ok

    def __enter__(self) -> "Criterion":
        return self

    def __exit__(self, exc_type, exc, tb) -> bool:
        if exc is not None:
            self.failures.append(f"{exc_type.__name__}: {exc}")
        status = "FAIL" if self.failures else "PASS"
        detail = "; ".join(self.failures + self.notes)
        prior = ACCEPTANCE.get(self.number) if self.merge else None
        if prior is not None:
            status = "FAIL" if "FAIL" in (status, prior[0]) else "PASS"
            detail = prior[1] + " | " + detail
        ACCEPTANCE[self.number] = (status, detail)
        if exc is None and self.failures:
            pytest.fail(f"criterion {self.number}: " + "; ".join(self.failures), pytrace=False)
        return False


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        status, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"ACCEPTANCE {n}: {status} {detail}")
