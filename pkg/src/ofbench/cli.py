"""Command line for the controller engine and the benchmark harness.

Settings resolve as defaults < config file < environment < flags.  The config
file is INI with ``[engine]`` and ``[bench]`` sections whose keys match the
long flag names (dashes or underscores).  ``OFBENCH_PORT`` overrides the engine
port and ``OFBENCH_CONTROLLER`` the harness target.

Exit codes: 0 success, 1 audit violation, 2 usage error, 3 runtime failure.
"""

from __future__ import annotations

import argparse
import configparser
import hashlib
import json
import logging
import os
import sys
from dataclasses import replace
from pathlib import Path

from .bench.config import BenchConfig, BenchMode
from .bench.emulator import ConnectionLost, RunResult, run_bench
from .bench.sweep import SweepAxis, SweepPoint, run_sweep
from .bufferpool import BufferKind, BufferStrategy
from .engine.config import ModelKind, StrategyMatrix, ThreadingModel
from .engine.process import READY_PREFIX, EngineStartError, spawn_engine
from .engine.runtime import BindFailure, Engine
from .learnswitch import TableStrategy
from .report.aggregate import InsufficientLoops, aggregate_run
from .report.cdf import build_cdf
from .report.emit import emit, loop_rows, parse_json

log = logging.getLogger("ofbench")

EXIT_OK = 0
EXIT_AUDIT = 1
EXIT_USAGE = 2
EXIT_RUNTIME = 3
RAW_KIND = "ofbench-run"
LOG_LEVELS = ["DEBUG", "INFO", "WARNING", "ERROR"]


class UsageError(Exception):
    pass


def _bool(text) -> bool:
    if isinstance(text, bool):
        return text
    v = str(text).strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise UsageError(f"not a boolean: {text!r}")


def _opt_int(text):
    if text in (None, "", "none"):
        return None
    return int(text)


# name -> (type, default); names double as INI keys and argparse dests
ENGINE_KEYS = {
    "host": (str, "0.0.0.0"),
    "port": (int, 6633),
    "stats_port": (int, -1),
    "model": (str, ModelKind.RUN_TO_COMPLETION.value),
    "workers": (int, 1),
    "max_workers": (int, 1024),
    "pin": (_bool, False),
    "buffers": (str, BufferKind.PREALLOCATED_POOL.value),
    "pool_buffer_size": (int, 4096),
    "pool_depth": (int, 64),
    "table": (str, "auto"),
    "queue_capacity": (int, 4096),
    "sample_every": (int, 64),
    "idle_timeout": (int, 0),
    "hard_timeout": (int, 0),
    "audit": (_bool, False),
}
BENCH_KEYS = {
    "switches": (int, 64),
    "macs": (int, 1_000_000),
    "loops": (int, 10),
    "duration": (float, 10.0),
    "delay": (int, 0),
    "mode": (str, BenchMode.THROUGHPUT.value),
    "controller": (str, "127.0.0.1:6633"),
    "warmup": (int, 1),
    "threads": (int, 1),
    "window": (int, 1 << 16),
    "max_probes": (_opt_int, None),
    "drain_timeout": (float, 30.0),
    "watts": (float, None),
}
ENV_OVERRIDES = {
    "OFBENCH_PORT": ("engine", "port"),
    "OFBENCH_CONTROLLER": ("bench", "controller"),
}


def _add_engine_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("engine")
    g.add_argument("--host", default=None)
    g.add_argument("--port", type=int, default=None)
    g.add_argument("--stats-port", type=int, default=None,
                   help="JSON counters endpoint; 0 picks a free port, -1 disables")
    g.add_argument("--model", choices=[m.value for m in ModelKind], default=None)
    g.add_argument("--workers", type=int, default=None)
    g.add_argument("--max-workers", type=int, default=None)
    g.add_argument("--pin", action="store_const", const=True, default=None)
    g.add_argument("--buffers", choices=[b.value for b in BufferKind], default=None)
    g.add_argument("--pool-buffer-size", type=int, default=None)
    g.add_argument("--pool-depth", type=int, default=None)
    g.add_argument("--table", choices=["auto"] + [t.value for t in TableStrategy], default=None)
    g.add_argument("--queue-capacity", type=int, default=None)
    g.add_argument("--sample-every", type=int, default=None)
    g.add_argument("--idle-timeout", type=int, default=None)
    g.add_argument("--hard-timeout", type=int, default=None)
    g.add_argument("--audit", action="store_const", const=True, default=None,
                   help="check buffer and shard ownership at runtime")


def _add_bench_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("harness")
    g.add_argument("-s", "--switches", type=int, default=None)
    g.add_argument("-M", "--macs", type=int, default=None, help="unique MACs per switch")
    g.add_argument("-l", "--loops", type=int, default=None)
    g.add_argument("-m", "--ms-per-test", dest="duration", type=lambda v: float(v) / 1000.0,
                   default=None, help="loop duration in milliseconds")
    g.add_argument("-D", "--delay", type=int, default=None,
                   help="ms to wait after the handshake before sending probes")
    mode = g.add_mutually_exclusive_group()
    mode.add_argument("--throughput", dest="mode", action="store_const",
                      const=BenchMode.THROUGHPUT.value, default=None)
    mode.add_argument("--latency", dest="mode", action="store_const",
                      const=BenchMode.LATENCY.value)
    g.add_argument("-c", "--controller", default=None, help="host:port")
    g.add_argument("-w", "--warmup", type=int, default=None, help="loops dropped from aggregates")
    g.add_argument("-t", "--threads", type=int, default=None, help="emulator threads")
    g.add_argument("--window", type=int, default=None, help="probes in flight per switch")
    g.add_argument("--max-probes", type=int, default=None, help="per switch and loop")
    g.add_argument("--drain-timeout", type=float, default=None)
    g.add_argument("--watts", type=float, default=None, help="platform power for efficiency")


def _add_output_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("output")
    g.add_argument("--csv", type=Path, default=None)
    g.add_argument("--json", type=Path, default=None)
    g.add_argument("--raw", type=Path, default=None, help="full results, readable by 'report'")
    g.add_argument("--figures-dir", type=Path, default=None, help="write PNG figures here")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ofbench", description=__doc__.splitlines()[0])
    p.add_argument("--config", type=Path, default=None, help="INI file")
    p.add_argument("--log-level", default="INFO", choices=LOG_LEVELS)
    # the same two options are also accepted after the subcommand
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, default=argparse.SUPPRESS, help="INI file")
    common.add_argument("--log-level", default=argparse.SUPPRESS, choices=LOG_LEVELS)
    sub = p.add_subparsers(dest="command", required=True, metavar="COMMAND")

    def add(name: str, help: str) -> argparse.ArgumentParser:
        return sub.add_parser(name, help=help, parents=[common])

    e = add("engine", "run the controller")
    _add_engine_flags(e)
    e.add_argument("--announce", action="store_true",
                   help=f"print '{READY_PREFIX} port=N stats_port=N' once listening")

    b = add("bench", "benchmark a controller")
    _add_bench_flags(b)
    b.add_argument("--spawn", action="store_true",
                   help="start a local engine from the [engine] settings first")
    b.add_argument("--stats", default=None, help="engine counters endpoint host:port")
    _add_engine_flags(b)
    _add_output_flags(b)

    s = add("sweep", "sweep one axis")
    s.add_argument("--axis", required=True, choices=[a.value for a in SweepAxis])
    s.add_argument("--points", required=True, help="comma-separated values")
    s.add_argument("--remote", action="store_true",
                   help="use --controller as is instead of spawning an engine per point")
    _add_bench_flags(s)
    _add_engine_flags(s)
    _add_output_flags(s)

    r = add("report", "re-render stored results")
    r.add_argument("input", type=Path, help="file written by --raw or --json")
    r.add_argument("-w", "--warmup", type=int, default=None)
    r.add_argument("--watts", type=float, default=None)
    _add_output_flags(r)
    return p


def resolve(args: argparse.Namespace, env: dict | None = None) -> dict:
    """Effective ``{"engine": {...}, "bench": {...}}`` after all overrides."""
    env = os.environ if env is None else env
    eff = {"engine": {k: d for k, (_, d) in ENGINE_KEYS.items()},
           "bench": {k: d for k, (_, d) in BENCH_KEYS.items()}}
    keys = {"engine": ENGINE_KEYS, "bench": BENCH_KEYS}
    if getattr(args, "config", None) is not None:
        cp = configparser.ConfigParser()
        if not cp.read(args.config):
            raise UsageError(f"cannot read config file {args.config}")
        for section in cp.sections():
            if section not in keys:
                raise UsageError(f"unknown config section [{section}]")
            for raw_key, value in cp.items(section):
                key = raw_key.replace("-", "_")
                if key not in keys[section]:
                    raise UsageError(f"unknown key {raw_key!r} in [{section}]")
                eff[section][key] = keys[section][key][0](value)
    for var, (section, key) in ENV_OVERRIDES.items():
        if env.get(var):
            eff[section][key] = keys[section][key][0](env[var])
    for section in keys:
        for key in keys[section]:
            v = getattr(args, key, None)
            if v is not None:
                eff[section][key] = v
    return eff


def config_hash(eff: dict) -> str:
    return hashlib.sha256(json.dumps(eff, sort_keys=True).encode()).hexdigest()


def matrix_from(eng: dict) -> StrategyMatrix:
    kind = ModelKind(eng["model"])
    table = eng["table"]
    if table == "auto":
        table = (TableStrategy.SHARDED_PER_WORKER if kind is ModelKind.RUN_TO_COMPLETION
                 else TableStrategy.SHARED_LOCKED)
    return StrategyMatrix(
        threading=ThreadingModel(kind, eng["workers"], eng["pin"], eng["max_workers"]),
        buffers=BufferStrategy(BufferKind(eng["buffers"]), eng["pool_buffer_size"],
                               eng["pool_depth"]),
        table=TableStrategy(table),
        listen_port=eng["port"],
        listen_host=eng["host"],
        stats_port=eng["stats_port"],
        sample_every=eng["sample_every"],
        queue_capacity=eng["queue_capacity"],
        idle_timeout=eng["idle_timeout"],
        hard_timeout=eng["hard_timeout"],
        audit=eng["audit"],
    )


def bench_from(b: dict) -> BenchConfig:
    return BenchConfig(
        switches=b["switches"], unique_macs=b["macs"], worker_threads=b["threads"],
        loops=b["loops"], loop_duration=b["duration"], handshake_delay_ms=b["delay"],
        mode=BenchMode(b["mode"]), controller=b["controller"], warmup=b["warmup"],
        window=b["window"], max_probes=b["max_probes"], drain_timeout=b["drain_timeout"],
    )


# -- commands ----------------------------------------------------------------


def cmd_engine(args, eff) -> int:
    matrix = matrix_from(eff["engine"])
    engine = Engine(matrix)
    try:
        engine.start()
    except BindFailure as exc:
        log.error("event=bind_failed error=%s", exc)
        return EXIT_RUNTIME
    if args.announce:
        stats = engine.stats_address
        print(f"{READY_PREFIX} port={engine.address[1]} "
              f"stats_port={stats[1] if stats else -1}", flush=True)
    engine.serve_forever()
    return EXIT_OK


def _point_doc(sp: SweepPoint) -> dict:
    return {
        "axis": sp.axis.value if isinstance(sp.axis, SweepAxis) else sp.axis,
        "point": sp.point,
        "error": sp.error,
        "rebind_ok": sp.rebind_ok,
        "result": sp.result.as_dict() if sp.result else None,
    }


def _write_outputs(args, points: list[dict], eff: dict, transport: str) -> int:
    """Write requested files, print a summary, return the exit code."""
    watts = eff["bench"].get("watts")
    warmup = eff["bench"]["warmup"]
    rows, cdfs, violations = [], {}, []
    for pt in points:
        if pt["result"] is None:
            print(f"{pt['axis']}={pt['point']}: FAILED {pt['error']}")
            continue
        res = RunResult.from_dict(pt["result"])
        rows.extend(loop_rows(pt["axis"], pt["point"], res.loops, warmup, watts))
        try:
            summary = aggregate_run(res.loops, warmup)
        except InsufficientLoops as exc:
            print(f"{pt['axis']}={pt['point']}: {exc}")
            continue
        violations.extend(summary.audit.violations)
        samples = [x for lp in res.loops[warmup:] for x in lp.latencies_us]
        if samples:
            cdfs[f"{pt['axis']}={pt['point']}"] = build_cdf(samples)
        line = (f"{pt['axis']}={pt['point']}: mean {summary.mean:.6g} rps over "
                f"{summary.loops} loops (median {summary.median:.6g}, "
                f"stddev {summary.stddev:.3g})")
        if summary.cdf:
            line += f", p50 {summary.cdf.q(0.5):.4g} us, p99 {summary.cdf.q(0.99):.4g} us"
        if summary.allocs_per_packet is not None:
            line += f", {summary.allocs_per_packet:.3g} allocs/packet"
        if watts:
            line += f", {summary.mean / watts:.6g} rps/W"
        line += ", audit ok" if summary.audit.ok else f", AUDIT {summary.audit.violations}"
        print(line)
    meta = {"transport": transport, "config_hash": config_hash(eff)}
    if args.csv:
        args.csv.write_bytes(emit(rows, "csv"))
    if args.json:
        args.json.write_bytes(emit(rows, "json", meta))
    if getattr(args, "raw", None):
        doc = {"kind": RAW_KIND, "schema_version": 1, "meta": meta, "effective": eff,
               "points": points}
        args.raw.write_text(json.dumps(doc, indent=1) + "\n")
    if args.figures_dir:
        from .report.figures import render_figures

        for path in render_figures(rows, args.figures_dir, cdfs):
            log.info("event=figure_written path=%s", path)
    if violations:
        log.error("event=audit_violation details=%s", violations)
        return EXIT_AUDIT
    if any(pt["result"] is None for pt in points):
        return EXIT_RUNTIME
    return EXIT_OK


def _stats_fn(addr: str | None):
    if not addr:
        return None
    from .bench.config import parse_address
    from .engine.process import fetch_stats

    host, port = parse_address(addr)
    return lambda: fetch_stats(host, port)


def cmd_bench(args, eff) -> int:
    cfg = bench_from(eff["bench"])
    engine = None
    stats_fn = _stats_fn(args.stats)
    transport = "remote"
    try:
        if args.spawn:
            matrix = replace(matrix_from(eff["engine"]), listen_host="127.0.0.1",
                             listen_port=0, stats_port=0)
            engine = spawn_engine(matrix, log_level=args.log_level)
            cfg = replace(cfg, controller=f"{engine.host}:{engine.port}")
            stats_fn = engine.stats
        if cfg.address[0] in ("127.0.0.1", "localhost", "::1"):
            transport = "loopback"
        log.info("event=bench_start controller=%s switches=%d macs=%d loops=%d duration=%s",
                 cfg.controller, cfg.switches, cfg.unique_macs, cfg.loops, cfg.loop_duration)
        result = run_bench(cfg, stats_fn=stats_fn)
    except (ConnectionLost, EngineStartError, OSError) as exc:
        log.error("event=bench_failed error=%s", exc)
        return EXIT_RUNTIME
    finally:
        if engine is not None:
            engine.terminate()
    point = SweepPoint("bench", cfg.switches, result)
    return _write_outputs(args, [_point_doc(point)], eff, transport)


def cmd_sweep(args, eff) -> int:
    try:
        points = [int(float(x)) for x in args.points.split(",") if x.strip()]
    except ValueError as exc:
        raise UsageError(f"bad --points: {exc}") from exc
    if not points:
        raise UsageError("--points is empty")
    axis = SweepAxis(args.axis)
    base = bench_from(eff["bench"])
    matrix = None if args.remote else matrix_from(eff["engine"])
    if axis is SweepAxis.CONCURRENCY and matrix is None:
        raise UsageError("a concurrency sweep restarts the engine; drop --remote")
    results = run_sweep(axis, points, base, matrix, log_level=args.log_level)
    transport = "loopback" if matrix is not None else "remote"
    return _write_outputs(args, [_point_doc(sp) for sp in results], eff, transport)


def cmd_report(args, eff) -> int:
    try:
        text = args.input.read_text()
        doc = json.loads(text)
    except (OSError, ValueError) as exc:
        raise UsageError(f"cannot read {args.input}: {exc}") from exc
    if doc.get("kind") == RAW_KIND:
        stored = doc.get("effective", {})
        bench = dict(stored.get("bench", {}))
        for key in ("warmup", "watts"):
            if getattr(args, key) is not None:
                bench[key] = getattr(args, key)
        eff = {"engine": stored.get("engine", {}), "bench": bench}
        return _write_outputs(args, doc["points"], eff, doc.get("meta", {}).get("transport", "?"))
    if "columns" in doc:
        rows, meta = parse_json(text)
        if args.csv:
            args.csv.write_bytes(emit(rows, "csv"))
        if args.json:
            args.json.write_bytes(emit(rows, "json", meta))
        if args.figures_dir:
            from .report.figures import render_figures

            render_figures(rows, args.figures_dir)
        print(f"{len(rows)} rows")
        return EXIT_OK
    raise UsageError(f"{args.input} is neither a raw results file nor an emitted JSON table")


COMMANDS = {"engine": cmd_engine, "bench": cmd_bench, "sweep": cmd_sweep, "report": cmd_report}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    logging.basicConfig(level=getattr(logging, args.log_level), stream=sys.stderr,
                        format="%(asctime)s %(levelname)s %(name)s %(message)s")
    try:
        eff = resolve(args)
        if args.command in ("engine", "bench", "sweep"):
            matrix_from(eff["engine"])
            bench_from(eff["bench"])
    except (UsageError, ValueError) as exc:
        return _usage(parser, exc)
    log.info("event=effective_config command=%s hash=%s", args.command, config_hash(eff))
    try:
        return COMMANDS[args.command](args, eff)
    except UsageError as exc:
        return _usage(parser, exc)


def _usage(parser: argparse.ArgumentParser, exc: Exception) -> int:
    parser.print_usage(sys.stderr)
    print(f"ofbench: error: {exc}", file=sys.stderr)
    return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
