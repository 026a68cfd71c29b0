"""YCSB-style workloads: a load phase of inserts, then a read/update mix."""

from __future__ import annotations

import hashlib
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .kernels import OP_DELETE, OP_INSERT, OP_SEARCH, OP_UPDATE

KEY_LIMIT = (1 << 64) - 1  # all-ones is reserved
OP_NAMES = {OP_SEARCH: "READ", OP_UPDATE: "UPDATE", OP_INSERT: "INSERT", OP_DELETE: "DELETE"}
_OP_CODES = {"READ": OP_SEARCH, "UPDATE": OP_UPDATE, "INSERT": OP_INSERT, "DELETE": OP_DELETE}
_KEY_RE = re.compile(r"^([A-Za-z_]*)(\d+)$")


class ParseError(ValueError):
    pass


def parse_ycsb_key(text: str) -> int:
    """Strip the alphabetic prefix of a YCSB key and read the digits."""
    m = _KEY_RE.match(text.strip())
    if not m:
        raise ParseError(f"not a prefixed decimal key: {text!r}")
    value = int(m.group(2))
    if value > KEY_LIMIT:
        raise ParseError(f"key {text!r} does not fit in 64 bits")
    return value


class ZipfGen:
    """Zipfian ranks in [1, n] using the Gray et al. generator that YCSB uses."""

    def __init__(self, n: int, theta: float = 0.99, seed: int = 0):
        if n < 1:
            raise ValueError("population must be at least 1")
        if not 0 <= theta < 1:
            raise ValueError("theta must lie in [0, 1)")
        self.n = n
        self.theta = theta
        self.rng = np.random.default_rng(seed)
        self.zeta2 = self._zeta(min(n, 2), theta)
        self.zetan = self._zeta(n, theta)
        self.alpha = 1.0 / (1.0 - theta)
        if n > 2:
            self.eta = (1 - (2.0 / n) ** (1 - theta)) / (1 - self.zeta2 / self.zetan)
        else:
            self.eta = 1.0

    @staticmethod
    def _zeta(n: int, theta: float) -> float:
        total = 0.0
        for lo in range(1, n + 1, 1 << 22):
            i = np.arange(lo, min(n, lo + (1 << 22) - 1) + 1, dtype=np.float64)
            total += float(np.sum(i ** -theta))
        return total

    def pmf(self, rank: int) -> float:
        return rank ** -self.theta / self.zetan

    def sample(self, size: int) -> np.ndarray:
        u = self.rng.random(size)
        uz = u * self.zetan
        ranks = 1 + (self.n * (self.eta * u - self.eta + 1) ** self.alpha).astype(np.int64)
        ranks = np.minimum(ranks, self.n)
        ranks[uz < 1 + 0.5 ** self.theta] = 2
        ranks[uz < 1.0] = 1
        if self.n == 1:
            ranks[:] = 1
        return ranks

    def next(self) -> int:
        return int(self.sample(1)[0])


def zipf_next(gen: ZipfGen) -> int:
    return gen.next()


@dataclass(frozen=True)
class WorkloadSpec:
    record_count: int
    op_count: int
    read_fraction: float = 0.5
    update_fraction: float = 0.5
    distribution: str = "zipf"
    theta: float = 0.99
    seed: int = 0
    value_size: int = 1000

    def __post_init__(self):
        if self.record_count < 1:
            raise ValueError("record_count must be at least 1")
        if self.op_count < 0:
            raise ValueError("op_count must be non-negative")
        if abs(self.read_fraction + self.update_fraction - 1.0) > 1e-9:
            raise ValueError("read and update fractions must sum to 1")
        if min(self.read_fraction, self.update_fraction) < 0:
            raise ValueError("fractions must be non-negative")
        if self.distribution not in ("zipf", "uniform"):
            raise ValueError(f"unknown distribution {self.distribution!r}")


class ValueStore:
    """Opaque value blocks addressed by reference; contents derive from the
    reference so a multi-gigabyte value set never has to be materialised."""

    def __init__(self, value_size: int = 1000, seed: int = 0):
        self.value_size = value_size
        self.seed = seed

    def get(self, ref: int) -> bytes:
        out = bytearray()
        counter = 0
        while len(out) < self.value_size:
            h = hashlib.blake2b(f"{self.seed}:{ref}:{counter}".encode(), digest_size=64)
            out += h.digest()
            counter += 1
        return bytes(out[:self.value_size])


@dataclass
class Workload:
    load_keys: np.ndarray
    load_refs: np.ndarray
    run_kinds: np.ndarray
    run_keys: np.ndarray
    run_refs: np.ndarray
    values: ValueStore = field(default_factory=ValueStore)

    def script(self) -> list[tuple[str, int]]:
        out = [("INSERT", int(k)) for k in self.load_keys]
        out += [(OP_NAMES[int(o)], int(k)) for o, k in zip(self.run_kinds, self.run_keys)]
        return out


def unique_keys(n: int, rng: np.random.Generator) -> np.ndarray:
    """n distinct uniform 64-bit keys (excluding the reserved all-ones key)."""
    out = np.empty(0, dtype=np.uint64)
    while out.size < n:
        need = n - out.size
        cand = rng.integers(0, KEY_LIMIT, size=need + need // 8 + 16, dtype=np.uint64,
                            endpoint=False)
        merged = np.concatenate([out, cand])
        _, first = np.unique(merged, return_index=True)
        out = merged[np.sort(first)][:n]
    return out


def gen_workload(spec: WorkloadSpec) -> Workload:
    rng = np.random.default_rng(spec.seed)
    keys = unique_keys(spec.record_count, rng)
    refs = np.arange(1, spec.record_count + 1, dtype=np.uint64)
    n = spec.op_count
    if spec.distribution == "zipf":
        ranks = ZipfGen(spec.record_count, spec.theta, spec.seed + 1).sample(n)
    else:
        ranks = rng.integers(1, spec.record_count + 1, size=n)
    kinds = np.where(rng.random(n) < spec.read_fraction, OP_SEARCH, OP_UPDATE).astype(np.int64)
    run_keys = keys[ranks - 1] if n else np.empty(0, dtype=np.uint64)
    run_refs = np.zeros(n, dtype=np.uint64)
    upd = kinds == OP_UPDATE
    run_refs[upd] = spec.record_count + 1 + np.arange(int(upd.sum()), dtype=np.uint64)
    return Workload(keys, refs, kinds, run_keys, run_refs,
                    ValueStore(spec.value_size, spec.seed))


def parse_trace(lines) -> list[tuple[str, int]]:
    """Read ``OP key`` lines; YCSB's ``OP table key [fields]`` form is accepted too."""
    out = []
    for lineno, line in enumerate(lines, 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        tok = line.split()
        op = tok[0].upper()
        if op not in _OP_CODES or len(tok) < 2:
            raise ParseError(f"line {lineno}: cannot parse {line!r}")
        try:
            key = parse_ycsb_key(tok[1])
        except ParseError:
            if len(tok) < 3:
                raise ParseError(f"line {lineno}: bad key in {line!r}") from None
            key = parse_ycsb_key(tok[2])
        if key == KEY_LIMIT:
            raise ParseError(f"line {lineno}: key {key} is reserved")
        out.append((op, key))
    return out


def workload_from_trace(path: str | Path, value_size: int = 1000) -> Workload:
    """Leading INSERTs form the load phase; the rest is the run phase."""
    with open(path) as f:
        ops = parse_trace(f)
    i = 0
    while i < len(ops) and ops[i][0] == "INSERT":
        i += 1
    load = [k for _, k in ops[:i]]
    run = ops[i:]
    kinds = np.array([_OP_CODES[o] for o, _ in run], dtype=np.int64)
    run_keys = np.array([k for _, k in run], dtype=np.uint64)
    run_refs = np.zeros(len(run), dtype=np.uint64)
    mutating = (kinds == OP_UPDATE) | (kinds == OP_INSERT)
    run_refs[mutating] = len(load) + 1 + np.arange(int(mutating.sum()), dtype=np.uint64)
    return Workload(np.array(load, dtype=np.uint64),
                    np.arange(1, len(load) + 1, dtype=np.uint64), kinds, run_keys, run_refs,
                    ValueStore(value_size))


def partition(n: int, threads: int) -> list[np.ndarray]:
    """Round-robin op indices per worker."""
    idx = np.arange(n)
    return [idx[t::threads] for t in range(threads)]
