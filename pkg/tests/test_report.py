from __future__ import annotations

import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from ofbench.bench.emulator import LoopResult
from ofbench.report import (COLUMNS, EmptySamples, InsufficientLoops, NonpositiveWatts,
                            PhaseProfile, aggregate_run, build_cdf, efficiency, emit_csv,
                            emit_json, loop_rows, merge_cdfs, parse_csv, parse_json)
from ofbench.report.figures import render_figures

samples = st.lists(st.integers(0, 10**6).map(float), min_size=1, max_size=300)
probs = st.one_of(st.floats(0, 1), st.sampled_from([0.0, 0.01, 0.07, 0.29, 0.5, 0.99, 1.0]))


def _loops(tputs, lat=None):
    out = []
    for i, t in enumerate(tputs):
        lp = LoopResult(i, probes=int(t), responses=int(t), flow_mods=int(t), elapsed=1.0)
        if lat:
            lp.latencies_us = list(lat[i])
        out.append(lp)
    return out


# -- CDF -----------------------------------------------------------------------------

def test_singleton_cdf():
    c = build_cdf([5.0])
    assert c.q(0.5) == 5 and c.q(0.99) == 5 and c.q(0) == 5 and c.q(1) == 5


def test_one_to_hundred_median():
    c = build_cdf(range(100, 0, -1))
    assert c.q(0.5) == 50 == oracles.quantile(range(1, 101), 0.5)
    assert c.q(1.0) == 100 and c.q(0.0) == 1


def test_empty_samples_rejected():
    with pytest.raises(EmptySamples):
        build_cdf([])


def test_probability_out_of_range():
    with pytest.raises(ValueError):
        build_cdf([1.0]).q(1.5)


@given(samples, probs)
def test_quantile_matches_counting_oracle(xs, p):
    assert build_cdf(xs).q(p) == oracles.quantile(xs, p)


@given(samples, st.lists(probs, min_size=2, max_size=10))
def test_quantile_monotone_and_max(xs, ps):
    c = build_cdf(xs)
    qs = [c.q(p) for p in sorted(ps)]
    assert qs == sorted(qs)
    assert c.q(1.0) == max(xs)


@given(st.lists(samples, min_size=1, max_size=5))
def test_merged_cdf_equals_concatenated(parts):
    merged = merge_cdfs([build_cdf(p) for p in parts])
    assert merged.samples == build_cdf([x for p in parts for x in p]).samples


def test_cdf_points_end_at_one():
    pts = build_cdf(range(1000)).points(50)
    assert pts[-1] == (999, 1.0)
    assert [f for _, f in pts] == sorted(f for _, f in pts)


# -- aggregation -------------------------------------------------------------------------

def test_flat_loops():
    s = aggregate_run(_loops([1000] * 10), warmup=1)
    assert s.loops == 9 and s.mean == 1000 and s.stddev == 0


def test_warmup_dropped():
    s = aggregate_run(_loops([0, 900, 1100]), warmup=1)
    assert s.mean == 1000 and s.min == 900 and s.max == 1100


def test_insufficient_loops():
    with pytest.raises(InsufficientLoops):
        aggregate_run(_loops([1, 2]), warmup=2)


@given(st.lists(st.integers(1, 10**7), min_size=2, max_size=12), st.randoms())
def test_aggregation_permutation_invariant(tputs, rnd):
    kept = _loops(tputs)[1:]
    shuffled = kept[:]
    rnd.shuffle(shuffled)
    a = aggregate_run(kept, warmup=0)
    b = aggregate_run(shuffled, warmup=0)
    assert a.mean == pytest.approx(b.mean) and a.stddev == pytest.approx(b.stddev)
    assert (a.min, a.max, a.median) == (b.min, b.max, b.median)
    assert a.mean == pytest.approx(oracles.mean([float(t) for t in tputs[1:]]))
    assert a.stddev == pytest.approx(oracles.sample_stddev([float(t) for t in tputs[1:]]),
                                     abs=1e-6)


def test_merged_cdf_in_summary():
    lat = [[5.0, 1.0], [3.0], [2.0, 4.0]]
    s = aggregate_run(_loops([1, 1, 1], lat), warmup=1)
    assert s.cdf.samples == (2.0, 3.0, 4.0)


@given(st.integers(1, 10**6), st.integers(0, 10**9), st.integers(0, 10**9),
       st.integers(0, 10**9), st.integers(0, 10**9), st.integers(1, 10**6),
       st.one_of(st.none(), st.integers(0, 10**12)))
def test_profile_fractions_bounded(n, d, a, e, io, packets, cpu):
    c = {"samples": n, "packet_ins": packets, "decode_ns": d, "app_ns": a, "encode_ns": e,
         "io_ns": io, "io_samples": n, "recv_ns": 0, "recv_samples": 0}
    p = PhaseProfile.from_counters(c, cpu)
    parts = [p.decode, p.app, p.encode, p.io]
    assert all(0 <= x <= 1 for x in parts)
    assert sum(parts) <= 1 + 1e-9
    assert p.unattributed == pytest.approx(max(1 - sum(parts), 0), abs=1e-12)


def test_profile_from_engine_counters():
    c = {"samples": 10, "packet_ins": 100, "decode_ns": 1000, "app_ns": 2000,
         "encode_ns": 1000, "io_ns": 0, "io_samples": 0}
    p = PhaseProfile.from_counters(c, cpu_ns=100 * 800)
    assert (p.decode, p.app, p.encode) == (0.125, 0.25, 0.125)
    assert p.unattributed == 0.5


# -- energy ---------------------------------------------------------------------------

def test_efficiency_reference_arithmetic():
    assert efficiency(4.8e6, 150).efficiency == pytest.approx(32_000)


def test_efficiency_zero_and_proportional():
    assert efficiency(0, 150).efficiency == 0
    assert efficiency(1000, 20).efficiency == 2 * efficiency(1000, 40).efficiency


@pytest.mark.parametrize("watts", [0, -1])
def test_nonpositive_watts(watts):
    with pytest.raises(NonpositiveWatts):
        efficiency(100, watts)


def test_efficiency_from_summary():
    s = aggregate_run(_loops([0, 300, 300]), warmup=1)
    assert efficiency(s, 150).efficiency == 2


# -- emit ------------------------------------------------------------------------------

def test_empty_sweep_is_header_only_csv():
    assert emit_csv([]) == (",".join(COLUMNS) + "\n").encode()


def test_header_matches_documented_schema():
    assert COLUMNS == tuple(
        "axis,point,loop,throughput_rps,p50_us,p99_us,flowmods,packetouts,allocs,"
        "bytes_copied,handoffs,watts,efficiency_rps_per_w,schema_version".split(","))


@settings(max_examples=50)
@given(st.lists(st.lists(st.integers(1, 10**7), min_size=2, max_size=6), max_size=4),
       st.one_of(st.none(), st.floats(1, 1000)))
def test_row_count_and_json_byte_identity(points, watts):
    rows = []
    for i, tputs in enumerate(points):
        lat = [[random.Random(j).uniform(1, 1e4) for _ in range(5)] for j in range(len(tputs))]
        rows += loop_rows("connectivity", i + 1, _loops(tputs, lat), warmup=1, watts=watts)
    assert len(rows) == sum(len(t) - 1 for t in points)
    doc = emit_json(rows, {"transport": "loopback"})
    parsed, meta = parse_json(doc)
    assert emit_json(parsed, meta) == doc
    csv_bytes = emit_csv(rows)
    assert emit_csv(parse_csv(csv_bytes)) == csv_bytes
    assert len(csv_bytes.decode().splitlines()) == 1 + len(rows)


def test_floats_have_six_significant_digits():
    (row,) = loop_rows("x", 1, [LoopResult(0, 1, 1, 1, elapsed=3.0)], warmup=0, watts=7)
    assert row["throughput_rps"] == 0.333333
    assert b"0.333333," in emit_csv([row])


def test_unknown_schema_rejected():
    with pytest.raises(ValueError):
        parse_json(b'{"schema_version": 99, "rows": []}')


def test_figures_written(tmp_path):
    rows = loop_rows("concurrency", 1, _loops([1, 100, 110], [[1.0]] * 3), 1, 150)
    rows += loop_rows("concurrency", 2, _loops([1, 200, 210], [[2.0]] * 3), 1, 150)
    paths = render_figures(rows, tmp_path, {"1": build_cdf([1.0, 2.0, 3.0])})
    names = sorted(p.name for p in paths)
    assert "throughput_concurrency.png" in names and "latency_cdf.png" in names
    assert "efficiency.png" in names
    assert all(p.stat().st_size > 0 for p in paths)
