"""Benchmark driver behind the command-line interface."""

from __future__ import annotations

import gc
import threading
import time
from dataclasses import dataclass

import numpy as np

from .crashtest import run_crashtest
from .errors import ConfigError
from .heap import cycles_per_ns
from .kernels import OP_INSERT, OP_SEARCH, OP_UPDATE
from .layout import BENCH_NODE_SIZES, HEAP_START, Geometry
from .metrics import AccessTrace, clamp_positive, geo_mean, make_row, percentile, touched_lines
from .tree import BPlusTree, validate_config
from .workload import WorkloadSpec, gen_workload, partition, unique_keys, workload_from_trace

VARIANTS = {"fastfair": "linear", "circ": "circular"}
MODES = ("micro", "ycsb", "crashtest", "readamp")
THREADS = (1, 2, 4, 8)
CRASH_NODE_SIZE = 128  # capacity 8


@dataclass
class RunConfig:
    variant: str = "fastfair"
    accel: str = "none"
    search: str = "linear"
    node_size: int = 4096
    threads: int = 1
    count: int = 100_000
    write_latency_ns: int = 300
    mode: str = "micro"
    seed: int = 0
    trace: str | None = None
    out: str | None = None
    format: str = "csv"
    warmup: float = 0.05
    theta: float = 0.99
    trace_sample: int = 2000

    def validate(self) -> None:
        if self.variant not in VARIANTS:
            raise ConfigError(f"variant must be one of {sorted(VARIANTS)}")
        validate_config(VARIANTS[self.variant], self.accel, self.search)
        if self.node_size not in BENCH_NODE_SIZES:
            raise ConfigError(f"node size must be one of {BENCH_NODE_SIZES}")
        if self.threads not in THREADS:
            raise ConfigError(f"threads must be one of {THREADS}")
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}")
        if self.count < 0:
            raise ConfigError("count must be non-negative")
        if self.write_latency_ns < 0:
            raise ConfigError("write latency must be non-negative")
        if self.format not in ("csv", "json"):
            raise ConfigError("format must be csv or json")
        if not 0 <= self.warmup < 1:
            raise ConfigError("warm-up fraction must lie in [0, 1)")
        if self.trace is not None and self.mode != "ycsb":
            raise ConfigError("--trace is only used by the ycsb mode")

    @property
    def node_kind(self) -> str:
        return VARIANTS[self.variant]


def region_size_for(n_keys: int, node_size: int) -> int:
    """Room for n_keys inserted in any order (leaves at least half full)."""
    g = Geometry(node_size)
    half = max(1, g.capacity // 2)
    leaves = n_keys // half + 2
    nodes = leaves
    level = leaves
    while level > 1:
        level = level // half + 1
        nodes += level
    nodes = int(nodes * 1.1) + 16
    return HEAP_START + nodes * g.block


def make_tree(cfg: RunConfig, n_keys: int, *, accel: str | None = None,
              search: str | None = None) -> BPlusTree:
    return BPlusTree(cfg.node_kind, cfg.node_size, accel or cfg.accel, search or cfg.search,
                     region_size=region_size_for(n_keys, cfg.node_size),
                     write_latency_ns=cfg.write_latency_ns, spin=cfg.write_latency_ns > 0)


@dataclass
class PhaseResult:
    kinds: np.ndarray
    ns: np.ndarray
    vals: np.ndarray
    wall_s: float
    flushes: int
    fences: int


def run_phase(tree: BPlusTree, kinds, keys, refs, threads: int = 1) -> PhaseResult:
    """Execute ops split round-robin over worker threads; per-op latency in ns."""
    n = len(keys)
    kinds = np.ascontiguousarray(kinds, dtype=np.int64)
    keys = np.ascontiguousarray(keys, dtype=np.uint64)
    refs = np.ascontiguousarray(refs, dtype=np.uint64)
    cycles = np.zeros(n, dtype=np.uint64)
    vals = np.zeros(n, dtype=np.uint64)
    parts = partition(n, threads)
    errors: list[BaseException] = []

    def work(idx: np.ndarray) -> None:
        try:
            v = np.zeros(len(idx), dtype=np.uint64)
            _, c = tree.run_ops(kinds[idx], keys[idx], refs[idx], v)
            cycles[idx] = c
            vals[idx] = v
        except BaseException as e:  # surfaced after join
            errors.append(e)

    before = tree.region.counters
    gc_was = gc.isenabled()
    gc.disable()
    t0 = time.perf_counter()
    try:
        if threads == 1:
            work(parts[0])
        else:
            ts = [threading.Thread(target=work, args=(p,)) for p in parts]
            for t in ts:
                t.start()
            for t in ts:
                t.join()
    finally:
        wall = time.perf_counter() - t0
        if gc_was:
            gc.enable()
    if errors:
        raise errors[0]
    d = tree.region.counters - before
    ns = cycles.astype(np.float64) / cycles_per_ns()
    return PhaseResult(kinds, ns, vals, wall, d.flushes, d.fences)


def measured_mask(n: int, threads: int, warmup: float) -> np.ndarray:
    """Drop the first ``warmup`` fraction of every worker's ops."""
    mask = np.ones(n, dtype=bool)
    for idx in partition(n, threads):
        mask[idx[:int(len(idx) * warmup)]] = False
    return mask


def summarize(cfg: RunConfig, phase: str, op: str, res: PhaseResult, sel: np.ndarray,
              touched: float | str = "", accel: str | None = None,
              search: str | None = None) -> dict:
    ns = clamp_positive(res.ns[sel])
    n_all = len(res.ns)
    return make_row(variant=cfg.variant, accelerator=accel or cfg.accel,
                    search=search or cfg.search, node_size=cfg.node_size, threads=cfg.threads,
                    phase=phase, op=op, count=int(sel.sum()),
                    geo_mean_ns=geo_mean(ns) if ns.size else "",
                    p99_ns=percentile(ns, 0.99) if ns.size else "",
                    mean_touched_lines=touched, flushes=res.flushes, fences=res.fences,
                    ops_per_sec=n_all / res.wall_s if res.wall_s > 0 else "")


def mean_leaf_lines(tree: BPlusTree, keys: np.ndarray) -> float:
    total = 0
    for k in keys:
        tr = AccessTrace()
        tree.search(int(k), tr)
        total += touched_lines(tr)
    return total / max(1, len(keys))


# ------------------------------------------------------------------- modes

def run_micro(cfg: RunConfig) -> list[dict]:
    """Uniform random inserts of ``count`` distinct keys, then a search of each."""
    if cfg.count == 0:
        return []
    rng = np.random.default_rng(cfg.seed)
    keys = unique_keys(cfg.count, rng)
    refs = np.arange(1, cfg.count + 1, dtype=np.uint64)
    tree = make_tree(cfg, cfg.count)
    mask = measured_mask(cfg.count, cfg.threads, cfg.warmup)
    ins = run_phase(tree, np.full(cfg.count, OP_INSERT), keys, refs, cfg.threads)
    order = rng.permutation(cfg.count)
    skeys = keys[order]
    srch = run_phase(tree, np.full(cfg.count, OP_SEARCH), skeys, np.zeros(cfg.count, np.uint64),
                     cfg.threads)
    if not np.array_equal(srch.vals, refs[order]):
        raise RuntimeError("search returned wrong values after the insert phase")
    sample = skeys[:cfg.trace_sample]
    return [summarize(cfg, "micro", "insert", ins, mask),
            summarize(cfg, "micro", "search", srch, mask, mean_leaf_lines(tree, sample))]


def run_ycsb(cfg: RunConfig) -> list[dict]:
    if cfg.trace:
        wl = workload_from_trace(cfg.trace)
    else:
        if cfg.count == 0:
            return []
        wl = gen_workload(WorkloadSpec(cfg.count, cfg.count, theta=cfg.theta, seed=cfg.seed))
    n_load = len(wl.load_keys)
    inserts = int(np.sum(wl.run_kinds == OP_INSERT))
    tree = make_tree(cfg, n_load + inserts)
    rows = []
    if n_load:
        load = run_phase(tree, np.full(n_load, OP_INSERT), wl.load_keys, wl.load_refs,
                         cfg.threads)
        rows.append(summarize(cfg, "load", "insert", load,
                              measured_mask(n_load, cfg.threads, cfg.warmup)))
    n_run = len(wl.run_keys)
    if n_run:
        run = run_phase(tree, wl.run_kinds, wl.run_keys, wl.run_refs, cfg.threads)
        mask = measured_mask(n_run, cfg.threads, cfg.warmup)
        for code, name in ((OP_SEARCH, "search"), (OP_UPDATE, "update"), (OP_INSERT, "insert")):
            sel = mask & (wl.run_kinds == code)
            if sel.any():
                rows.append(summarize(cfg, "run", name, run, sel))
        rows.append(summarize(cfg, "run", "all", run, mask))
    return rows


def readamp_lines(node_kind: str, node_size: int, accel: str, search: str = "linear") -> list[int]:
    """Touched leaf lines for each key of a full leaf, in key order."""
    g = Geometry(node_size)
    tree = BPlusTree(node_kind, node_size, accel, search,
                     region_size=HEAP_START + 4 * g.block, write_latency_ns=0)
    keys = [10 * (i + 1) for i in range(g.capacity)]
    for i, k in enumerate(keys):
        tree.insert(k, i + 1)
    out = []
    for k in keys:
        tr = AccessTrace()
        tree.search(k, tr)
        out.append(touched_lines(tr))
    return out


def run_readamp(cfg: RunConfig) -> list[dict]:
    """Cold-cache line touches for every key of one full leaf."""
    accels = [cfg.accel] if cfg.accel == "none" else ["none", cfg.accel]
    rows = []
    for acc in accels:
        search = cfg.search if acc == "none" else "linear"
        lines = readamp_lines(cfg.node_kind, cfg.node_size, acc, search)
        rows.append(make_row(variant=cfg.variant, accelerator=acc, search=search,
                             node_size=cfg.node_size, threads=1, phase="readamp", op="search",
                             count=len(lines), mean_touched_lines=float(np.mean(lines)),
                             flushes=0, fences=0))
    return rows


def run_crash(cfg: RunConfig) -> list[dict]:
    ops = cfg.count if cfg.count else 0
    rep = run_crashtest(cfg.node_kind, cfg.accel, node_size=CRASH_NODE_SIZE, ops=ops,
                        seed=cfg.seed)
    failed = len(rep.failures) + rep.truncated_points
    return [make_row(variant=cfg.variant, accelerator=cfg.accel, search=cfg.search,
                     node_size=CRASH_NODE_SIZE, threads=1, phase="crashtest", op="recover",
                     count=rep.images, passed=rep.images - len(rep.failures), failed=failed)]


def run_benchmark(cfg: RunConfig) -> list[dict]:
    cfg.validate()
    if cfg.mode == "micro":
        return run_micro(cfg)
    if cfg.mode == "ycsb":
        return run_ycsb(cfg)
    if cfg.mode == "readamp":
        return run_readamp(cfg)
    return run_crash(cfg)
