"""Stable CSV/JSON output.

Columns are fixed and versioned.  Floats carry 6 significant digits, and the
JSON form is canonical, so emitting parsed JSON reproduces it byte for byte.
"""

from __future__ import annotations

import csv
import enum
import io
import json
from typing import Iterable, Sequence

from ..bench.emulator import LoopResult
from .cdf import build_cdf

SCHEMA_VERSION = 1
COLUMNS = (
    "axis", "point", "loop", "throughput_rps", "p50_us", "p99_us", "flowmods",
    "packetouts", "allocs", "bytes_copied", "handoffs", "watts",
    "efficiency_rps_per_w", "schema_version",
)
FLOAT_COLUMNS = frozenset({"throughput_rps", "p50_us", "p99_us", "watts",
                           "efficiency_rps_per_w"})
INT_COLUMNS = frozenset({"point", "loop", "flowmods", "packetouts", "allocs",
                         "bytes_copied", "handoffs", "schema_version"})


class Format(enum.Enum):
    CSV = "csv"
    JSON = "json"


def fmt_float(x: float) -> float:
    return float(f"{x:.6g}")


def _norm(col: str, v):
    if v is None or v == "":
        return None
    if col in FLOAT_COLUMNS:
        return fmt_float(float(v))
    if col in INT_COLUMNS:
        return int(v)
    return str(v)


def loop_rows(axis: str, point: int, loops: Sequence[LoopResult], warmup: int = 1,
              watts: float | None = None) -> list[dict]:
    """One row per retained loop (warm-up loops are dropped)."""
    rows = []
    for lp in loops[warmup:]:
        eng = lp.engine or {}
        alloc = eng.get("alloc") or {}
        cdf = build_cdf(lp.latencies_us) if lp.latencies_us else None
        tput = lp.throughput
        row = {
            "axis": axis,
            "point": point,
            "loop": lp.loop,
            "throughput_rps": tput,
            "p50_us": cdf.q(0.5) if cdf else None,
            "p99_us": cdf.q(0.99) if cdf else None,
            "flowmods": lp.flow_mods,
            "packetouts": lp.packet_outs,
            "allocs": alloc.get("allocations") if lp.engine else None,
            "bytes_copied": alloc.get("bytes_copied") if lp.engine else None,
            "handoffs": eng.get("handoffs") if lp.engine else None,
            "watts": watts,
            "efficiency_rps_per_w": tput / watts if watts else None,
            "schema_version": SCHEMA_VERSION,
        }
        rows.append({c: _norm(c, row[c]) for c in COLUMNS})
    return rows


def _csv_cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return f"{v:.6g}"
    return str(v)


def emit_csv(rows: Iterable[dict]) -> bytes:
    out = io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    w.writerow(COLUMNS)
    for r in rows:
        w.writerow([_csv_cell(r.get(c)) for c in COLUMNS])
    return out.getvalue().encode()


def emit_json(rows: Iterable[dict], meta: dict | None = None) -> bytes:
    doc = {
        "schema_version": SCHEMA_VERSION,
        "columns": list(COLUMNS),
        "meta": meta or {},
        "rows": [{c: _norm(c, r.get(c)) for c in COLUMNS} for r in rows],
    }
    return (json.dumps(doc, indent=2, sort_keys=False) + "\n").encode()


def emit(rows: Iterable[dict], fmt: Format | str, meta: dict | None = None) -> bytes:
    fmt = Format(fmt)
    rows = list(rows)
    return emit_csv(rows) if fmt is Format.CSV else emit_json(rows, meta)


def parse_json(data: bytes | str) -> tuple[list[dict], dict]:
    doc = json.loads(data)
    if doc.get("schema_version") != SCHEMA_VERSION:
        raise ValueError(f"unsupported schema_version {doc.get('schema_version')}")
    return doc["rows"], doc.get("meta", {})


def parse_csv(data: bytes | str) -> list[dict]:
    text = data.decode() if isinstance(data, bytes) else data
    reader = csv.DictReader(io.StringIO(text))
    if tuple(reader.fieldnames or ()) != COLUMNS:
        raise ValueError("unexpected CSV header")
    return [{c: _norm(c, r[c]) for c in COLUMNS} for r in reader]
