import csv
import io
import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from sentinel_btree.metrics import (ROW_FIELDS, SCHEMA_VERSION, AccessTrace, EmptyStatsError,
                                    LatencyStats, geo_mean, make_row, percentile, rows_to_csv,
                                    rows_to_json, touched_lines)


def trace_of(offsets):
    t = AccessTrace()
    for o in offsets:
        t.read(o, 1)
    return t


def test_touched_lines_example():
    assert touched_lines(trace_of([0, 8, 70])) == 2


def test_full_2kb_scan_touches_32_lines():
    t = AccessTrace()
    for slot in range(128):
        t.read(slot * 16, 16)
    assert touched_lines(t) == 32


def test_wide_read_spanning_two_lines():
    t = AccessTrace()
    t.read(60, 8)
    assert touched_lines(t) == 2


@given(st.lists(st.integers(0, 1 << 20), max_size=50), st.randoms())
def test_touched_lines_permutation_and_duplication_invariant(offs, rnd):
    shuffled = offs + offs[: len(offs) // 2]
    rnd.shuffle(shuffled)
    assert touched_lines(trace_of(offs)) == touched_lines(trace_of(shuffled))
    assert touched_lines(trace_of(offs)) == len({o // 64 for o in offs})


@pytest.mark.parametrize("samples,p,want", [
    (list(range(1, 101)), 0.99, 99),
    ([5], 0.99, 5),
    ([1, 2, 2, 10], 0.5, 2),
])
def test_percentile_examples(samples, p, want):
    assert percentile(samples, p) == want


@given(st.lists(st.floats(0, 1e9), min_size=1, max_size=200), st.floats(0.001, 1.0))
def test_percentile_matches_nearest_rank_oracle(xs, p):
    rank = max(1, math.ceil(p * len(xs) - 1e-9))
    assert percentile(xs, p) == sorted(xs)[rank - 1]


@pytest.mark.parametrize("samples,want", [([1, 100], 10), ([7, 7, 7], 7), ([2, 8, 4], 4)])
def test_geo_mean_examples(samples, want):
    assert geo_mean(samples) == pytest.approx(want)


def test_empty_stats_raise():
    with pytest.raises(EmptyStatsError):
        geo_mean([])
    with pytest.raises(EmptyStatsError):
        percentile([], 0.5)


def test_bad_inputs():
    with pytest.raises(ValueError):
        geo_mean([0, 1])
    with pytest.raises(ValueError):
        percentile([1], 0)
    with pytest.raises(ValueError):
        LatencyStats().add(-1)


def test_latency_stats_wrapper():
    s = LatencyStats()
    s.extend([1, 100])
    assert s.geo_mean() == pytest.approx(10)
    assert s.percentile(0.5) == 1


def test_report_schema_is_versioned():
    row = make_row(variant="fastfair", count=3, geo_mean_ns=1.23456)
    text = rows_to_csv([row])
    header, line = text.strip().split("\n")
    assert header.split(",") == list(ROW_FIELDS)
    parsed = next(csv.DictReader(io.StringIO(text)))
    assert parsed["schema_version"] == str(SCHEMA_VERSION)
    assert parsed["geo_mean_ns"] == "1.235"
    doc = json.loads(rows_to_json([row]))
    assert doc["schema_version"] == SCHEMA_VERSION
    assert doc["rows"][0]["count"] == 3


def test_make_row_rejects_unknown_fields():
    with pytest.raises(KeyError):
        make_row(colour="red")


def test_numpy_scalars_serialise():
    doc = json.loads(rows_to_json([make_row(count=np.int64(4))]))
    assert doc["rows"][0]["count"] == 4
