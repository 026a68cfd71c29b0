"""Node heap: persistent node blocks plus their volatile companions.

Each node block lives in a ``PersistentRegion``.  Alongside it the heap keeps
volatile per-node state that is never flushed and is rebuilt on recovery:
entry counts, sentinel arrays, fingerprint arrays and reader/writer locks.
"""

from __future__ import annotations

import time
from functools import lru_cache

import numpy as np

from . import kernels as K
from .errors import OutOfSpaceError
from .layout import (ACCEL_FINGERPRINT, ACCEL_SENTINEL, C_ACCEL, C_BLOCK_W, C_CAP, C_HEAP_W,
                     C_KIND, C_LATENCY_NS, C_LOCKING, C_NLINES, C_SEARCH, C_SPIN_CYCLES,
                     CFG_LEN, EV_FLUSH, EV_STORE, FLAG_LEAF, H_BASECOUNT, H_FLAGS, HDR_WORDS,
                     HEAP_START, KEY_MAX, LINE, Geometry)
from .nvm_sim import PersistentRegion, zeroed_array

SENTINEL_SPACE = 1 << 48
FINGERPRINT_SPACE = 2 << 48


@lru_cache(maxsize=1)
def cycles_per_ns() -> float:
    """Cycle-counter rate, calibrated against the monotonic clock."""
    K.now_cycles()
    best = []
    for _ in range(3):
        t0 = time.perf_counter_ns()
        c0 = K.now_cycles()
        while time.perf_counter_ns() - t0 < 20_000_000:
            pass
        c1 = K.now_cycles()
        t1 = time.perf_counter_ns()
        best.append((int(c1) - int(c0)) / (t1 - t0))
    return float(np.median(best))


class NodeHeap:
    def __init__(self, region: PersistentRegion, geom: Geometry, kind: int, accel: int,
                 search: int, *, locking: bool = True, spin: bool = False):
        self.region = region
        self.geom = geom
        self.kind = kind
        self.accel = accel
        self.cap = geom.capacity
        self.nlines = geom.nlines
        self.block = geom.block
        self.max_nodes = max(0, (region.size - HEAP_START) // geom.block)
        n = self.max_nodes
        self.counts = zeroed_array(n, np.int64)
        shape = (n, max(self.nlines, 1)) if accel == ACCEL_SENTINEL else (1, 1)
        self.sents = zeroed_array(shape, np.uint64)
        self.sents[:] = KEY_MAX
        shape = (n, self.cap) if accel == ACCEL_FINGERPRINT else (1, 1)
        self.fps = zeroed_array(shape, np.uint8)
        self.locks = zeroed_array(n + 1, np.int64)
        # sentinel 0 is never probed, so only nlines-1 words are laid out
        self.sentinel_stride = -(-max(self.nlines - 1, 1) * 8 // LINE) * LINE
        self.cfg = np.zeros(CFG_LEN, dtype=np.int64)
        c = self.cfg
        c[C_HEAP_W] = HEAP_START // 8
        c[C_BLOCK_W] = geom.block // 8
        c[C_CAP] = self.cap
        c[C_NLINES] = self.nlines
        c[C_KIND] = kind
        c[C_ACCEL] = accel
        c[C_SEARCH] = search
        c[C_LOCKING] = int(locking)
        c[C_LATENCY_NS] = region.write_latency_ns
        c[C_SPIN_CYCLES] = int(region.write_latency_ns * cycles_per_ns()) if spin else 0
        self.next = HEAP_START

    @property
    def words(self) -> np.ndarray:
        return self.region.array

    # ------------------------------------------------------------- allocation

    def alloc(self) -> int:
        if self.next + self.block > self.region.size:
            raise OutOfSpaceError(f"region of {self.region.size} bytes is full")
        off = self.next
        self.next += self.block
        idx = self.idx(off)
        self.counts[idx] = 0
        self.locks[idx + 1] = 0
        return off

    def idx(self, off: int) -> int:
        return (off - HEAP_START) // self.block

    def contains(self, off: int) -> bool:
        return (HEAP_START <= off < HEAP_START + self.max_nodes * self.block
                and (off - HEAP_START) % self.block == 0)

    # ---------------------------------------------------------------- headers

    def load(self, off: int) -> int:
        return self.region.words[off >> 3]

    def is_leaf(self, off: int) -> bool:
        return bool(self.region.words[(off >> 3) + H_FLAGS] & FLAG_LEAF)

    def base(self, off: int) -> int:
        return self.region.words[(off >> 3) + H_BASECOUNT] & 0xFFFFFFFF

    def count(self, off: int) -> int:
        return int(self.counts[self.idx(off)])

    def slot_word(self, off: int, p: int) -> int:
        """Word index of the key of physical slot ``p``."""
        return (off >> 3) + HDR_WORDS + 2 * p

    # ------------------------------------------------------------------ plans

    def new_plan(self):
        size = K.plan_size(self.cap)
        return (np.empty(size, np.int64), np.empty(size, np.int64), np.empty(size, np.uint64))

    def apply(self, ek, ew, ev, m: int) -> None:
        r = self.region
        if not r.tracking:
            K.apply_events(r.array, r.counter_array, self.cfg, ek, ew, ev, m)
            return
        for e in range(m):
            k = ek[e]
            if k == EV_STORE:
                r.store_word(int(ew[e]) << 3, int(ev[e]))
            elif k == EV_FLUSH:
                r.flush_line(int(ew[e]) << 3)
            else:
                r.fence()

    def sync_leaf(self, off: int, pos: int, n_before: int, inserted: bool, left: bool) -> None:
        K._post_sync(self.region.array, self.counts, self.sents, self.fps, self.cfg,
                     off >> 3, self.idx(off), pos, n_before, inserted, left)

    def rebuild_accel(self, off: int) -> None:
        K.rebuild_accel(self.region.array, self.counts, self.sents, self.fps, self.cfg,
                        off >> 3, self.idx(off))

    # ----------------------------------------------------- trace addressing

    def sentinel_addr(self, off: int, i: int) -> int:
        return SENTINEL_SPACE + self.idx(off) * self.sentinel_stride + (i - 1) * 8

    def fingerprint_addr(self, off: int, p: int) -> int:
        stride = -(-self.cap // LINE) * LINE
        return FINGERPRINT_SPACE + self.idx(off) * stride + p
