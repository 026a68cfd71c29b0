"""Command-line benchmark and crash-test runner."""

from __future__ import annotations

import argparse
import sys

from .bench import MODES, THREADS, VARIANTS, RunConfig, run_benchmark
from .errors import ConfigError, CorruptionError
from .layout import ACCELS, BENCH_NODE_SIZES, SEARCHES
from .metrics import rows_to_csv, rows_to_json
from .workload import ParseError

DEFAULT_COUNTS = {"micro": 100_000, "ycsb": 100_000, "crashtest": 200, "readamp": 0}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="sentinel-btree",
                                description="Persistent B+-tree leaf search benchmarks.")
    p.add_argument("--variant", choices=sorted(VARIANTS), default="fastfair")
    p.add_argument("--accel", choices=sorted(ACCELS), default="none")
    p.add_argument("--search", choices=sorted(SEARCHES), default="linear")
    p.add_argument("--node-size", type=int, default=4096, choices=BENCH_NODE_SIZES)
    p.add_argument("--threads", type=int, default=1, choices=THREADS)
    p.add_argument("--count", type=int, default=None,
                   help="ops (micro/ycsb: keys and ops, crashtest: random ops)")
    p.add_argument("--write-latency-ns", type=int, default=300)
    p.add_argument("--mode", choices=MODES, default="micro")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--trace", default=None, help="YCSB trace file (ycsb mode)")
    p.add_argument("--out", default=None, help="write the report here instead of stdout")
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.add_argument("--warmup", type=float, default=0.05,
                   help="fraction of each worker's ops excluded from statistics")
    return p


def config_from_args(ns: argparse.Namespace) -> RunConfig:
    count = ns.count if ns.count is not None else DEFAULT_COUNTS[ns.mode]
    return RunConfig(variant=ns.variant, accel=ns.accel, search=ns.search,
                     node_size=ns.node_size, threads=ns.threads, count=count,
                     write_latency_ns=ns.write_latency_ns, mode=ns.mode, seed=ns.seed,
                     trace=ns.trace, out=ns.out, format=ns.format, warmup=ns.warmup)


def main(argv: list[str] | None = None) -> int:
    ns = build_parser().parse_args(argv)
    cfg = config_from_args(ns)
    try:
        rows = run_benchmark(cfg)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    except CorruptionError as e:
        print(f"corruption: {e}", file=sys.stderr)
        return 3
    except (ParseError, OSError) as e:
        print(f"input error: {e}", file=sys.stderr)
        return 2
    text = rows_to_json(rows) if cfg.format == "json" else rows_to_csv(rows)
    if cfg.out:
        with open(cfg.out, "w") as f:
            f.write(text)
    else:
        sys.stdout.write(text)
    if cfg.mode == "crashtest" and any(r.get("failed") for r in rows):
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
