"""Acceptance criteria 1 to 12 at their stated scales and tolerances.

Each test records PASS or FAIL with its measured numbers; the terminal summary
prints one ``ACCEPTANCE n:`` line per criterion.
"""

from __future__ import annotations

import os
import random
import re
import resource
import shutil
import socket
import statistics
import subprocess
import threading
import time
from collections import Counter
from contextlib import contextmanager

import pytest

import oracles
from conftest import Criterion, free_port, make_matrix
from ofbench import ofwire as w
from ofbench.bench import BenchConfig, BenchMode, run_bench
from ofbench.bufferpool import BufferKind
from ofbench.cli import EXIT_OK, main
from ofbench.engine import ModelKind
from ofbench.engine.process import spawn_engine
from ofbench.learnswitch import SharedLockedTable, ShardedTable, handle_packet_in
from ofbench.report import aggregate_run, build_cdf, efficiency, parse_csv, parse_json

pytestmark = [pytest.mark.acceptance, pytest.mark.slow]

RTC = ModelKind.RUN_TO_COMPLETION
SIQ = ModelKind.SINGLE_IO_QUEUE
SPQ = ModelKind.SHARED_POOL_QUEUE
POOL = BufferKind.PREALLOCATED_POOL
OBJECT = BufferKind.PER_PACKET_OBJECT
SHARDED = "sharded_per_worker"
LOCKED = "shared_locked"
MEMORY_BUDGET = 16 << 30
PERF_WORKERS = 8


def _cores() -> int:
    return len(os.sched_getaffinity(0))


def _vm_hwm(pid: int | str = "self") -> int:
    """Peak resident set size of ``pid`` in bytes."""
    with open(f"/proc/{pid}/status") as fh:
        for line in fh:
            if line.startswith("VmHWM:"):
                return int(line.split()[1]) * 1024
    return 0


@contextmanager
def spawned(kind=RTC, workers=2, buffers=POOL, table=None, **kw):
    from ofbench.learnswitch import TableStrategy
    t = None if table is None else TableStrategy(table)
    proc = spawn_engine(make_matrix(kind, workers, buffers, t, **kw))
    try:
        yield proc
    finally:
        proc.terminate()


def _bench(port: int, **kw) -> BenchConfig:
    base = dict(switches=64, unique_macs=1000, loops=10, loop_duration=10.0, warmup=1,
                controller=f"127.0.0.1:{port}", window=256)
    base.update(kw)
    return BenchConfig(**base)


# -- 1 -----------------------------------------------------------------------------

CBENCH_LOOP = re.compile(r"total = ([0-9.]+) per ms")


def _cbench_binary() -> str | None:
    explicit = os.environ.get("OFBENCH_CBENCH")
    if explicit:
        return shutil.which(explicit) or (explicit if os.path.exists(explicit) else None)
    return shutil.which("cbench")


def test_criterion_01_bidirectional_interop():
    from ofbench.interop import OsKenController, find_osken_python
    with Criterion(1) as c:
        t0 = time.monotonic()
        cbench = _cbench_binary()
        if c.check(cbench is not None, "reference cbench binary: "
                   + (cbench or "not found (PATH or OFBENCH_CBENCH)")):
            with spawned(RTC, 2) as proc:
                out = subprocess.run(
                    [cbench, "-c", proc.host, "-p", str(proc.port), "-s", "16", "-M", "1000",
                     "-l", "10", "-m", "10000", "-t"],
                    capture_output=True, text=True, timeout=300)
                snap = proc.stats()
            per_loop = [float(x) for x in CBENCH_LOOP.findall(out.stdout)]
            c.check(len(per_loop) >= 10 and all(x > 0 for x in per_loop),
                    f"cbench loops {len(per_loop)}, min rate "
                    f"{min(per_loop, default=0):.3g} per ms")
            c.check(snap["protocol_errors"] == 0 and snap["malformed_closes"] == 0,
                    f"engine protocol errors {snap['protocol_errors']}")

        python = find_osken_python()
        if c.check(python is not None, "os-ken interpreter: " + (python or "not importable")):
            with OsKenController(free_port()) as ctl:
                run = run_bench(_bench(ctl.port, switches=16, window=64))
            loops = run.loops
            c.check(len(loops) == 10 and all(lp.responses > 0 for lp in loops),
                    f"harness vs os-ken: {len(loops)} loops, min responses "
                    f"{min(lp.responses for lp in loops)}")
            c.check(run.reruns == 0 and sum(lp.other for lp in loops) == 0,
                    f"reruns {run.reruns}, unexpected messages "
                    f"{sum(lp.other for lp in loops)}")
            c.check(run.audit.ok, f"os-ken audit {run.audit.violations or 'ok'}")
            c.note(f"os-ken median {aggregate_run(loops, 1).median:.0f} rps")
        elapsed = time.monotonic() - t0
        c.check(elapsed <= 300, f"runtime {elapsed:.0f} s")


# -- 2 -----------------------------------------------------------------------------

@pytest.mark.parametrize("kind,buffers", [(RTC, POOL), (SIQ, POOL), (SPQ, POOL), (RTC, OBJECT)],
                         ids=["rtc-pool", "siq-pool", "spq-pool", "rtc-object"])
def test_criterion_02_response_conservation(kind, buffers):
    with Criterion(2, merge=True) as c:
        with spawned(kind, 4, buffers) as proc:
            run = run_bench(_bench(proc.port, loops=3, loop_duration=5.0, unique_macs=10**5),
                            stats_fn=proc.stats)
        loops = run.loops
        total = sum(lp.probes for lp in loops)
        c.check(total <= 10**7, f"{kind.value}/{buffers.value}: {total} probes in "
                                f"{len(loops)} loops")
        c.check(all(lp.drained and lp.responses <= lp.probes for lp in loops),
                f"responses {sum(lp.responses for lp in loops)} <= probes per loop")
        c.check(all(lp.flow_mods == lp.responses == lp.engine["packet_ins"]
                    == lp.engine["flow_mods"] for lp in loops),
                f"flow-mods {sum(lp.flow_mods for lp in loops)} = engine packet-ins "
                f"{sum(lp.engine['packet_ins'] for lp in loops)}")
        c.check(all(lp.packet_outs == 0 == lp.engine["packet_outs"] for lp in loops),
                f"packet-outs {sum(lp.packet_outs for lp in loops)}")


# -- 3 -----------------------------------------------------------------------------

def _malformed_peer(port: int) -> float:
    s = socket.create_connection(("127.0.0.1", port), timeout=2.0)
    reader = w.FrameReader()
    s.sendall(w.encode(w.Hello(0)))
    xid = None
    while xid is None:
        for m in reader.feed(s.recv(4096)):
            if m.msg_type is w.OfType.FEATURES_REQUEST:
                xid = m.xid
    s.sendall(w.encode(w.FeaturesReply(xid, 0xBAD)))
    t0 = time.monotonic()
    s.sendall(bytes([1, 10, 0, 7, 0, 0, 0, 1]) + bytes(64))
    try:
        while s.recv(4096):
            pass
    except (ConnectionResetError, socket.timeout):
        pass
    dt = time.monotonic() - t0
    s.close()
    return dt


class _Injector:
    """Opens malformed connections during odd loops only.

    Wraps the engine stats call, which the harness makes right before and right
    after every loop, so injection switches on loop boundaries.
    """

    def __init__(self, proc):
        self.proc = proc
        self.calls = 0
        self.active = threading.Event()
        self.stop = threading.Event()
        self.closes: list[float] = []
        self.thread = threading.Thread(target=self._run, daemon=True)

    def stats(self) -> dict:
        snap = self.proc.stats()
        # call 0 is the run start; then (before, after) per loop
        if self.calls % 2 == 1:
            loop = self.calls // 2
            if loop % 2 == 1:
                self.active.set()
        else:
            self.active.clear()
        self.calls += 1
        return snap

    def _run(self) -> None:
        while not self.stop.is_set():
            if self.active.wait(0.05):
                self.closes.append(_malformed_peer(self.proc.port))
                self.stop.wait(0.25)


def test_criterion_03_malformed_frame_robustness():
    with Criterion(3) as c:
        with spawned(RTC, 2) as proc:
            inj = _Injector(proc)
            inj.thread.start()
            try:
                run = run_bench(_bench(proc.port, switches=8, loops=20, loop_duration=2.0),
                                stats_fn=inj.stats)
            finally:
                inj.stop.set()
                inj.thread.join()
        loops = run.loops[2:]
        dirty_closes = sum(lp.engine["malformed_closes"] for lp in loops[1::2])
        clean_closes = sum(lp.engine["malformed_closes"] for lp in loops[0::2])
        c.check(dirty_closes > 0 and clean_closes == 0,
                f"malformed closes {dirty_closes} in dirty loops, {clean_closes} in clean")
        c.check(bool(inj.closes) and max(inj.closes) < 0.1,
                f"{len(inj.closes)} malformed peers, slowest close "
                f"{max(inj.closes, default=0) * 1000:.1f} ms")
        ratios = [d.throughput / cl.throughput for cl, d in zip(loops[0::2], loops[1::2])]
        change = abs(statistics.median(ratios) - 1)
        c.check(change < 0.05, f"throughput change {change * 100:.2f}% "
                               f"(median of {len(ratios)} adjacent dirty/clean loop ratios)")


# -- 4 -----------------------------------------------------------------------------

CASES = 10**5


def _gen(rng: random.Random):
    u8 = lambda: rng.randrange(1 << 8)  # noqa: E731
    u16 = lambda: rng.randrange(1 << 16)  # noqa: E731
    u32 = lambda: rng.randrange(1 << 32)  # noqa: E731
    blob = lambda n: rng.randbytes(rng.randrange(n + 1))  # noqa: E731
    mac = lambda: rng.randbytes(6)  # noqa: E731
    acts = lambda: tuple(w.OutputAction(u16(), u16())  # noqa: E731
                         for _ in range(rng.randrange(5)))

    def port():
        return w.PhyPort(u16(), mac(), rng.randbytes(16), u32(), u32(), u32(), u32(), u32(),
                         u32())

    return {
        "hello": lambda: w.Hello(u32(), blob(64)),
        "echo_request": lambda: w.EchoRequest(u32(), blob(64)),
        "echo_reply": lambda: w.EchoReply(u32(), blob(64)),
        "error": lambda: w.ErrorMsg(u32(), u16(), u16(), blob(64)),
        "features_request": lambda: w.FeaturesRequest(u32()),
        "features_reply": lambda: w.FeaturesReply(
            u32(), rng.randrange(1 << 64), u32(), u8(), u32(), u32(),
            tuple(port() for _ in range(rng.randrange(5)))),
        "packet_in": lambda: w.PacketIn(u32(), u32(), u16(), u16(),
                                        rng.choice(list(w.PacketInReason)), blob(128)),
        "flow_mod": lambda: w.FlowMod(
            u32(), w.Match(u32(), u16(), mac(), mac()), rng.randrange(1 << 64),
            rng.choice(list(w.FlowModCommand)), u16(), u16(), u16(), u32(), u16(), u16(),
            acts()),
        "packet_out": lambda: w.PacketOut(u32(), u32(), u16(), acts(), blob(64)),
    }


def test_criterion_04_codec_properties():
    with Criterion(4) as c:
        gens = _gen(random.Random(20240))
        failures = Counter()
        for kind, make in gens.items():
            for _ in range(CASES):
                m = make()
                raw = w.encode(m)
                if w.decode(raw) != m or w.parse_header(raw).length != len(raw):
                    failures[kind] += 1
        c.check(not failures, f"{CASES} cases x {len(gens)} types, failures {dict(failures)}")
        pi = w.encode(w.canonical_packet_in(1, 2, 3, bytes.fromhex("000100000001"),
                                            bytes.fromhex("000100000002")))
        c.check(len(pi) == 82, f"canonical packet-in {len(pi)} bytes")


# -- 5 -----------------------------------------------------------------------------

PACKETS = 10**6


def _stream(seed: int, n: int) -> list[tuple[int, int, int, int]]:
    rng = random.Random(seed)
    return [(rng.randrange(64), rng.randrange(1, 49), rng.randrange(20_000),
             rng.randrange(20_000)) for _ in range(n)]


def _as_dict(table) -> dict:
    return {(k.datapath_id, k.mac): p for k, p in table.items()}


def test_criterion_05_learning_switch_oracle():
    with Criterion(5) as c:
        t0 = time.monotonic()
        stream = _stream(5, PACKETS)
        want, want_table = oracles.replay_map(stream)
        for name, table in (("shared", SharedLockedTable()), ("sharded", ShardedTable(8))):
            got = [handle_packet_in(table, *pkt).port for pkt in stream]
            c.check(got == want, f"{name}: sequential decisions "
                                 f"{'match' if got == want else 'differ'}")
            c.check(_as_dict(table) == want_table, f"{name}: sequential final table")

        # disjoint keys: thread i owns every datapath with dpid % n == i
        n = 8
        parts = [[p for p in stream if p[0] % n == i] for i in range(n)]
        for name, table in (("shared", SharedLockedTable(stripes=8)), ("sharded", ShardedTable(n))):
            ths = [threading.Thread(target=lambda part=part: [handle_packet_in(table, *p)
                                                               for p in part])
                   for part in parts]
            for th in ths:
                th.start()
            for th in ths:
                th.join()
            c.check(_as_dict(table) == want_table,
                    f"{name}: {n}-thread final table of {len(want_table)} entries")
        elapsed = time.monotonic() - t0
        c.check(elapsed <= 120, f"runtime {elapsed:.0f} s")


# -- 6 -----------------------------------------------------------------------------

def test_criterion_06_threading_model_equivalence():
    with Criterion(6) as c:
        multisets = {}
        for kind in (SIQ, SPQ, RTC):
            with spawned(kind, 4) as proc:
                run = run_bench(_bench(proc.port, switches=16, unique_macs=200, loops=1,
                                       loop_duration=5.0, warmup=0, max_probes=5000,
                                       record=True))
            multisets[kind] = Counter(run.responses)
            c.check(sum(multisets[kind].values()) == 16 * 5000,
                    f"{kind.value}: {sum(multisets[kind].values())} responses")
        first = multisets[SIQ]
        same = all(m == first for m in multisets.values())
        c.check(same, "response multisets " + ("identical" if same else "differ"))


# -- 7, 8, 9 -------------------------------------------------------------------------

_PERF: dict[tuple, object] = {}


def _perf(kind, buffers, table):
    """Median-of-10 run at 8 workers and 64 switches, cached across criteria."""
    key = (kind, buffers, table)
    if key not in _PERF:
        with spawned(kind, PERF_WORKERS, buffers, table) as proc:
            run = run_bench(_bench(proc.port), stats_fn=proc.stats)
        _PERF[key] = aggregate_run(run.loops, warmup=0)
    return _PERF[key]


def _precondition(c: Criterion) -> None:
    c.check(_cores() >= PERF_WORKERS, f"precondition: host has {_cores()} cores, "
                                      f"needs >= {PERF_WORKERS}")


def test_criterion_07_buffers():
    with Criterion(7) as c:
        _precondition(c)
        pool, obj = _perf(RTC, POOL, SHARDED), _perf(RTC, OBJECT, SHARDED)
        ratio = pool.median / obj.median
        c.check(ratio >= 1.2, f"pool/object throughput {ratio:.3f} "
                              f"({pool.median:.0f} vs {obj.median:.0f} rps)")
        c.check(pool.allocs_per_packet <= 0.01,
                f"pool allocs/packet {pool.allocs_per_packet:.4f}")
        c.check(obj.allocs_per_packet >= 1.0, f"object allocs/packet {obj.allocs_per_packet:.3f}")


def test_criterion_08_threading():
    with Criterion(8) as c:
        _precondition(c)
        rtc, siq = _perf(RTC, POOL, SHARDED), _perf(SIQ, POOL, LOCKED)
        ratio = rtc.median / siq.median
        c.check(ratio >= 1.5, f"run-to-completion/single-io-queue throughput {ratio:.3f} "
                              f"({rtc.median:.0f} vs {siq.median:.0f} rps)")


def test_criterion_09_table():
    with Criterion(9) as c:
        _precondition(c)
        sharded, locked = _perf(RTC, POOL, SHARDED), _perf(RTC, POOL, LOCKED)
        ratio = sharded.median / locked.median
        c.check(ratio >= 1.2, f"sharded/locked throughput {ratio:.3f} "
                              f"({sharded.median:.0f} vs {locked.median:.0f} rps)")
        locks = sharded.engine.get("lock_acquisitions")
        c.check(locks == 0, f"sharded lock acquisitions {locks}")
        c.note(f"locked table lock acquisitions {locked.engine.get('lock_acquisitions')}")


# -- 10 ----------------------------------------------------------------------------

def test_criterion_10_heterogeneity():
    with Criterion(10) as c:
        medians, peak = {}, 0
        for macs in (10**3, 10**7):
            with spawned(RTC, 2) as proc:
                run = run_bench(_bench(proc.port, unique_macs=macs), stats_fn=proc.stats)
                peak = max(peak, _vm_hwm(proc.proc.pid))
                entries = proc.stats()["table_entries"]
            medians[macs] = aggregate_run(run.loops, warmup=0).median
            c.note(f"{macs} MACs: median {medians[macs]:.0f} rps, {entries} table entries")
        c.check(medians[10**7] <= medians[10**3],
                f"median at 10^7 MACs / 10^3 MACs {medians[10**7] / medians[10**3]:.3f}")
        harness = resource.getrusage(resource.RUSAGE_SELF).ru_maxrss * 1024
        used = peak + harness
        c.check(used <= MEMORY_BUDGET, f"peak memory {used / 2**20:.0f} MiB "
                                       f"(engine {peak / 2**20:.0f} MiB)")


# -- 11 ----------------------------------------------------------------------------

PROBS = [0.0, 0.001, 0.01, 0.1, 0.25, 0.5, 0.75, 0.9, 0.95, 0.99, 0.999, 1.0]


def test_criterion_11_latency_discipline():
    with Criterion(11) as c:
        cdfs = {}
        for switches in (1, 64):
            with spawned(RTC, 2) as proc:
                run = run_bench(_bench(proc.port, switches=switches, loops=4,
                                       loop_duration=3.0, mode=BenchMode.LATENCY))
            summary = aggregate_run(run.loops, warmup=1)
            cdfs[switches] = summary.cdf
            samples = list(summary.cdf.samples)
            exact = all(summary.cdf.q(p) == oracles.quantile_fast(samples, p) for p in PROBS)
            sub = random.Random(switches).sample(samples, min(len(samples), 3000))
            sub_cdf = build_cdf(sub)
            exact = exact and all(sub_cdf.q(p) == oracles.quantile(sub, p) for p in PROBS)
            c.check(exact, f"{switches} switch(es): {len(samples)} samples, quantiles "
                           f"{'match' if exact else 'differ from'} the sort oracle")
        light, busy = cdfs[1].q(0.99), cdfs[64].q(0.99)
        c.check(light < busy, f"p99 1 switch {light:.0f} us vs 64 switches {busy:.0f} us")


# -- 12 ----------------------------------------------------------------------------

def test_criterion_12_measurement_protocol(tmp_path, capsys):
    with Criterion(12) as c:
        c.check(efficiency(4.8e6, 150).efficiency == 32_000,
                f"4.8e6 rps at 150 W gives {efficiency(4.8e6, 150).efficiency} rps/W")
        raw, out = tmp_path / "raw.json", tmp_path / "out.json"
        rc = main(["--log-level", "WARNING", "bench", "--spawn", "--watts", "150",
                   "--raw", str(raw), "--json", str(out)])
        printed = capsys.readouterr().out
        c.check(rc == EXIT_OK, f"exit code {rc}")
        import json
        doc = json.loads(raw.read_text())
        loops = [lp for pt in doc["points"] for lp in pt["result"]["loops"]]
        cfg = doc["points"][0]["result"]["config"]
        c.check((cfg["loops"], cfg["loop_duration"], cfg["switches"], cfg["unique_macs"])
                == (10, 10.0, 64, 10**6), f"defaults {cfg['loops']} x {cfg['loop_duration']} s")
        c.check(len(loops) == 10 and all(abs(lp["window"] - 10.0) < 0.25 for lp in loops),
                f"{len(loops)} loops, send windows "
                f"{min(lp['window'] for lp in loops):.2f}..{max(lp['window'] for lp in loops):.2f} s")
        tput = [lp["throughput"] for lp in loops]
        rows, _ = parse_json(out.read_bytes())
        kept_mean = statistics.fmean(tput[1:])
        m = re.search(r"mean ([0-9.e+]+) rps over (\d+) loops", printed)
        c.check(m is not None and float(m.group(1)) == pytest.approx(kept_mean, rel=1e-5)
                and int(m.group(2)) == 9,
                f"reported mean {m.group(1) if m else None} over {m.group(2) if m else None} "
                f"loops after 1 warm-up")
        c.check(all(r["efficiency_rps_per_w"] == pytest.approx(r["throughput_rps"] / 150,
                                                                rel=1e-5) for r in rows),
                "per-loop efficiency = throughput / 150 W")
        all_csv = tmp_path / "all.csv"
        rc = main(["report", str(raw), "-w", "0", "--csv", str(all_csv)])
        all_rows = parse_csv(all_csv.read_bytes())
        mean10 = statistics.fmean(r["throughput_rps"] for r in all_rows)
        c.check(rc == EXIT_OK and len(all_rows) == 10
                and mean10 == pytest.approx(statistics.fmean(tput), rel=1e-5),
                f"report -w 0: mean of all 10 loops {mean10:.6g} rps")
        capsys.readouterr()
