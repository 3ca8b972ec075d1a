from __future__ import annotations

import socket
import time
from collections import Counter

import pytest

from conftest import RawSwitch, make_matrix
from ofbench import ofwire as w
from ofbench.bench import BenchConfig, run_bench
from ofbench.bench.probes import probe_stream
from ofbench.bufferpool import BufferKind
from ofbench.engine import BindFailure, Engine, ModelKind, StrategyMatrix, ThreadingModel
from ofbench.engine.affinity import core_for_worker, pin_worker
from ofbench.engine.handshake import ConnState, Phase, ProtocolError, handshake_step
from ofbench.engine.process import engine_argv, port_is_free, spawn_engine
from ofbench.learnswitch import TableStrategy

MODELS = list(ModelKind)
SRC = bytes.fromhex("000100000001")
DST = bytes.fromhex("000100000002")


# -- configuration ---------------------------------------------------------------

def test_queue_models_require_shared_table():
    for kind in (ModelKind.SINGLE_IO_QUEUE, ModelKind.SHARED_POOL_QUEUE):
        with pytest.raises(ValueError):
            StrategyMatrix(ThreadingModel(kind, 2), table=TableStrategy.SHARDED_PER_WORKER)
        StrategyMatrix(ThreadingModel(kind, 2), table=TableStrategy.SHARED_LOCKED)


def test_worker_cap_is_configurable_not_hardcoded():
    ThreadingModel(worker_count=64)
    with pytest.raises(ValueError):
        ThreadingModel(worker_count=9, max_workers=8)
    with pytest.raises(ValueError):
        ThreadingModel(worker_count=0)


def test_matrix_dict_round_trip():
    m = make_matrix(ModelKind.SHARED_POOL_QUEUE, 3, BufferKind.PER_PACKET_OBJECT)
    assert StrategyMatrix.from_dict(m.as_dict()) == m


def test_engine_argv_carries_matrix():
    argv = engine_argv(make_matrix(ModelKind.SINGLE_IO_QUEUE, 4), "INFO")
    assert argv[argv.index("--model") + 1] == "single_io_queue"
    assert argv[argv.index("--workers") + 1] == "4"
    assert argv.index("--log-level") < argv.index("engine")


# -- handshake ---------------------------------------------------------------------

def test_hello_emits_hello_and_features_request():
    state, out = handshake_step(ConnState(), w.Hello(1))
    assert state.phase is Phase.EXPECT_FEATURES_REQ_SENT
    assert [type(m) for m in out] == [w.Hello, w.FeaturesRequest]


def test_features_reply_records_datapath():
    state, _ = handshake_step(ConnState(), w.Hello(1))
    state, out = handshake_step(state, w.FeaturesReply(2, datapath_id=7))
    assert state == ConnState(Phase.READY, 7) and out == []


def test_packet_in_before_hello_is_protocol_error():
    with pytest.raises(ProtocolError):
        handshake_step(ConnState(), w.canonical_packet_in(1, 1, 1, SRC, DST))


def test_echo_answered_during_handshake():
    _, out = handshake_step(ConnState(), w.EchoRequest(9, b"x"))
    assert out == [w.EchoReply(9, b"x")]


# -- affinity ----------------------------------------------------------------------

def test_core_modulo_rule():
    cores = list(range(16))
    assert [core_for_worker(i, cores) for i in range(4)] == [0, 1, 2, 3]
    assert core_for_worker(16, cores) == 0


def test_pin_failure_degrades_without_raising():
    assert pin_worker(0, [10_000]) is None


# -- runtime -------------------------------------------------------------------------

@pytest.mark.parametrize("kind", MODELS, ids=lambda k: k.value)
def test_one_packet_in_one_flow_mod(engine_factory, kind):
    e = engine_factory(kind=kind)
    sw = RawSwitch(e.address[1], dpid=1)
    sw.send(w.encode(w.canonical_packet_in(4242, 17, 3, SRC, DST)))
    (fm,) = sw.read_n(1)
    assert isinstance(fm, w.FlowMod)
    assert fm.xid == 4242 and fm.buffer_id == 17
    assert fm.match.in_port == 3 and fm.match.dl_src == SRC and fm.match.dl_dst == DST
    assert fm.actions == (w.OutputAction(w.OFPP_FLOOD),)
    sw.close()


@pytest.mark.parametrize("kind", MODELS, ids=lambda k: k.value)
@pytest.mark.parametrize("buffers", list(BufferKind), ids=lambda b: b.value)
def test_response_conservation_and_counters(engine_factory, kind, buffers):
    e = engine_factory(kind=kind, workers=3, buffers=buffers, audit=True)
    n, switches = 2000, 6
    socks = [RawSwitch(e.address[1], dpid=d) for d in range(1, switches + 1)]
    for s in socks:
        s.send(probe_stream(s.dpid, 0, n, 100))
    for s in socks:
        got = s.read_n(n)
        assert len(got) == n
        assert all(isinstance(m, w.FlowMod) for m in got)
        assert [m.xid for m in got] == list(range(n))
        s.close()
    snap = e.snapshot()
    assert snap["packet_ins"] == snap["flow_mods"] == n * switches
    assert snap["packet_outs"] == 0 and snap["protocol_errors"] == 0
    if kind is ModelKind.SINGLE_IO_QUEUE:
        assert snap["handoffs"] == 2 * n * switches
    elif kind is ModelKind.RUN_TO_COMPLETION:
        assert snap["handoffs"] == 0
        assert snap["conn_migrations"] == switches
        assert snap["lock_acquisitions"] == 0


def test_models_yield_identical_response_multisets(engine_factory):
    results = {}
    for kind in MODELS:
        e = engine_factory(kind=kind, workers=3)
        cfg = BenchConfig(switches=5, unique_macs=50, loops=1, loop_duration=0.5,
                          controller=f"127.0.0.1:{e.address[1]}", window=64,
                          max_probes=1500, warmup=0, record=True)
        run = run_bench(cfg)
        results[kind] = Counter(run.responses)
        assert sum(results[kind].values()) == 5 * 1500
    first = results[MODELS[0]]
    assert all(r == first for r in results.values())


def test_backpressure_conserves_responses(engine_factory):
    e = engine_factory(kind=ModelKind.SINGLE_IO_QUEUE, workers=2, queue_capacity=4)
    sw = RawSwitch(e.address[1], dpid=3)
    sw.send(probe_stream(3, 0, 3000, 10))
    assert len(sw.read_n(3000)) == 3000
    sw.close()


def _malformed_peer(port: int) -> float:
    """Handshake, send a length-7 header, return seconds until the engine closes."""
    sw = RawSwitch(port, dpid=99)
    sw.sock.settimeout(2.0)
    t0 = time.monotonic()
    sw.send(bytes([1, 10, 0, 7, 0, 0, 0, 1]) + bytes(64))
    try:
        while sw.sock.recv(4096):
            pass
    except ConnectionResetError:
        pass
    dt = time.monotonic() - t0
    sw.close()
    return dt


@pytest.mark.parametrize("kind", MODELS, ids=lambda k: k.value)
def test_malformed_length_closes_only_that_connection(engine_factory, kind):
    e = engine_factory(kind=kind, workers=2)
    good = RawSwitch(e.address[1], dpid=1)
    assert _malformed_peer(e.address[1]) < 0.1
    good.send(probe_stream(1, 0, 500, 10))
    assert len(good.read_n(500)) == 500
    snap = e.snapshot()
    assert snap["malformed_closes"] == 1
    good.close()


def test_packet_in_before_handshake_closes(engine_factory):
    e = engine_factory()
    s = socket.create_connection(e.address)
    s.settimeout(2)
    s.sendall(w.encode(w.canonical_packet_in(1, 1, 1, SRC, DST)))
    data = b""
    while True:
        chunk = s.recv(4096)
        if not chunk:
            break
        data += chunk
    s.close()
    time.sleep(0.05)
    assert e.snapshot()["protocol_errors"] == 1


def test_pinned_workers_still_correct():
    e = Engine(StrategyMatrix(ThreadingModel(ModelKind.RUN_TO_COMPLETION, 2, pin_threads=True),
                              listen_port=0, listen_host="127.0.0.1")).start()
    try:
        sw = RawSwitch(e.address[1], dpid=2)
        sw.send(probe_stream(2, 0, 300, 10))
        assert len(sw.read_n(300)) == 300
        sw.close()
    finally:
        e.stop()


def test_bind_failure_when_port_taken(engine_factory):
    e = engine_factory()
    with pytest.raises(BindFailure):
        Engine(make_matrix(listen_port=e.address[1])).start()


def test_stats_snapshot_over_tcp(engine_factory):
    from ofbench.engine.process import fetch_stats
    e = engine_factory()
    snap = fetch_stats(*e.stats_address)
    assert snap["config"]["threading"] == "run_to_completion"
    assert snap["packet_ins"] == 0


def test_spawned_engine_answers_and_releases_port():
    proc = spawn_engine(make_matrix(ModelKind.SHARED_POOL_QUEUE, 2))
    try:
        sw = RawSwitch(proc.port, dpid=1)
        sw.send(probe_stream(1, 0, 100, 10))
        assert len(sw.read_n(100)) == 100
        sw.close()
        assert proc.stats()["flow_mods"] == 100
    finally:
        assert proc.terminate()
    assert port_is_free(proc.host, proc.port)
