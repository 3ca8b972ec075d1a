"""Aggregation, CDFs, energy figures and CSV/JSON emission."""

from __future__ import annotations

from .aggregate import InsufficientLoops, PhaseProfile, RunSummary, aggregate_run
from .cdf import EmptySamples, LatencyCdf, build_cdf, merge_cdfs
from .emit import (COLUMNS, SCHEMA_VERSION, Format, emit, emit_csv, emit_json, loop_rows,
                   parse_csv, parse_json)
from .energy import EnergyReport, NonpositiveWatts, efficiency

__all__ = [
    "COLUMNS",
    "EmptySamples",
    "EnergyReport",
    "Format",
    "InsufficientLoops",
    "LatencyCdf",
    "NonpositiveWatts",
    "PhaseProfile",
    "RunSummary",
    "SCHEMA_VERSION",
    "aggregate_run",
    "build_cdf",
    "efficiency",
    "emit",
    "emit_csv",
    "emit_json",
    "loop_rows",
    "merge_cdfs",
    "parse_csv",
    "parse_json",
]
