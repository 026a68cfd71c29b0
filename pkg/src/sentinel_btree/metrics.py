"""Cache-line touch accounting and latency aggregation."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

SCHEMA_VERSION = 1
ROW_FIELDS = ("schema_version", "variant", "accelerator", "search", "node_size", "threads",
              "phase", "op", "count", "geo_mean_ns", "p99_ns", "mean_touched_lines",
              "flushes", "fences", "ops_per_sec", "passed", "failed")


class EmptyStatsError(ValueError):
    pass


@dataclass
class AccessTrace:
    """Byte offsets read during one logical operation (cold-cache model)."""

    line_size: int = 64
    touched: list[int] = field(default_factory=list)

    def read(self, offset: int, nbytes: int = 8) -> None:
        self.touched.append(offset)
        if nbytes > 1:
            self.touched.append(offset + nbytes - 1)

    def clear(self) -> None:
        self.touched.clear()


def touched_lines(trace: AccessTrace) -> int:
    return len({off // trace.line_size for off in trace.touched})


@dataclass
class LatencyStats:
    samples: list[float] = field(default_factory=list)

    def add(self, ns: float) -> None:
        if ns < 0:
            raise ValueError("latency samples must be non-negative")
        self.samples.append(ns)

    def extend(self, values: Iterable[float]) -> None:
        for v in values:
            self.add(v)

    def percentile(self, p: float) -> float:
        return percentile(self.samples, p)

    def geo_mean(self) -> float:
        return geo_mean(self.samples)


def percentile(samples: Sequence[float], p: float) -> float:
    """Nearest-rank percentile: the ceil(p*n)-th smallest sample."""
    if isinstance(samples, LatencyStats):
        samples = samples.samples
    n = len(samples)
    if n == 0:
        raise EmptyStatsError("no samples")
    if not 0 < p <= 1:
        raise ValueError(f"percentile fraction {p} not in (0, 1]")
    rank = max(1, math.ceil(p * n - 1e-9))
    arr = np.asarray(samples)
    return arr[np.argpartition(arr, rank - 1)[rank - 1]].item()


def geo_mean(samples: Sequence[float]) -> float:
    if isinstance(samples, LatencyStats):
        samples = samples.samples
    arr = np.asarray(samples, dtype=np.float64)
    if arr.size == 0:
        raise EmptyStatsError("no samples")
    if np.any(arr <= 0):
        raise ValueError("geometric mean needs strictly positive samples")
    return float(np.exp(np.mean(np.log(arr))))


def clamp_positive(ns: np.ndarray) -> np.ndarray:
    """Timer-resolution floor so a zero reading does not break the geo-mean."""
    return np.maximum(np.asarray(ns, dtype=np.float64), 1.0)


def make_row(**values) -> dict:
    row = {k: "" for k in ROW_FIELDS}
    row["schema_version"] = SCHEMA_VERSION
    unknown = set(values) - set(ROW_FIELDS)
    if unknown:
        raise KeyError(f"unknown report fields: {sorted(unknown)}")
    row.update(values)
    return row


def rows_to_csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=ROW_FIELDS, lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow(_fmt(r))
    return buf.getvalue()


def rows_to_json(rows: list[dict]) -> str:
    return json.dumps({"schema_version": SCHEMA_VERSION, "rows": [_fmt(r) for r in rows]},
                      indent=2)


def _fmt(row: dict) -> dict:
    out = {}
    for k, v in row.items():
        if isinstance(v, float):
            v = round(v, 3)
        elif isinstance(v, np.generic):
            v = v.item()
        out[k] = v
    return out
