"""Simulated byte-addressable persistent memory.

The region is a flat ``bytearray`` addressed in bytes.  All stores are 8-byte
aligned words.  Durability follows a flush/fence model:

* a store is *pending* until a flush of its cache line is followed by a fence;
* pending stores to the same cache line persist in program order (a line is
  written back as a snapshot of its contents);
* a flush of line L orders every earlier store to L before every later store;
* a fence orders every earlier store before every later store.

A crash keeps the durable image plus any subset of pending stores that is
closed under those ordering edges.  ``enumerate_crash_plans`` lists such
subsets and ``crash_image`` materialises one of them.

Tracking is optional.  Benchmarks construct regions with ``tracking=False``;
stores then go straight to memory and only the flush/fence counters and the
injected write latency are maintained.
"""

from __future__ import annotations

import mmap
import time
from dataclasses import dataclass
from typing import Callable, Iterator

import numpy as np

WORD = 8
DEFAULT_LINE_SIZE = 64
DEFAULT_WRITE_LATENCY_NS = 300

# indices into the shared counter array (also updated by compiled kernels)
CTR_FLUSHES = 0
CTR_FENCES = 1
CTR_DELAY_NS = 2


HUGE_PAGE = 2 << 20


def zeroed_buffer(nbytes: int):
    """Writable zeroed memory; large buffers ask the kernel for huge pages."""
    if nbytes < HUGE_PAGE:
        return bytearray(nbytes)
    buf = mmap.mmap(-1, nbytes)
    if hasattr(mmap, "MADV_HUGEPAGE"):
        try:
            buf.madvise(mmap.MADV_HUGEPAGE)
        except OSError:
            pass
    return buf


def zeroed_array(shape, dtype) -> np.ndarray:
    dtype = np.dtype(dtype)
    count = int(np.prod(shape))
    return np.frombuffer(zeroed_buffer(max(count * dtype.itemsize, 1)), dtype=dtype,
                         count=count).reshape(shape)


class NVMError(Exception):
    pass


class AlignmentError(NVMError, ValueError):
    pass


class RangeError(NVMError, IndexError):
    pass


class CrashPlanError(NVMError, ValueError):
    pass


@dataclass(frozen=True)
class FlushCounters:
    flushes: int
    fences: int
    injected_delay_ns: int

    def as_dict(self) -> dict[str, int]:
        return {"flushes": self.flushes, "fences": self.fences,
                "injected_delay_ns": self.injected_delay_ns}

    def __sub__(self, other: "FlushCounters") -> "FlushCounters":
        return FlushCounters(self.flushes - other.flushes,
                             self.fences - other.fences,
                             self.injected_delay_ns - other.injected_delay_ns)


@dataclass(frozen=True)
class CrashPlan:
    """A set of pending stores that survive a simulated power failure.

    ``stores`` holds store sequence numbers; ``persisted_subset`` the byte
    offsets they write.
    """

    stores: frozenset[int]
    persisted_subset: frozenset[int]


@dataclass
class _Pending:
    seq: int
    word: int
    value: int
    line: int
    flushed: bool = False


class PersistentRegion:
    def __init__(self, size: int, *, line_size: int = DEFAULT_LINE_SIZE,
                 write_latency_ns: int = DEFAULT_WRITE_LATENCY_NS,
                 tracking: bool = False, spin: bool = False,
                 _data: bytes | None = None):
        if size <= 0 or size % line_size:
            raise ValueError(f"region size {size} must be a positive multiple of {line_size}")
        if line_size % WORD:
            raise ValueError("line size must be a multiple of 8")
        self.size = size
        self.line_size = line_size
        self.write_latency_ns = int(write_latency_ns)
        self.tracking = tracking
        self.spin = spin
        if _data is not None:
            self.buf = bytearray(_data)
        elif tracking:
            self.buf = bytearray(size)
        else:
            self.buf = zeroed_buffer(size)
        self.words = memoryview(self.buf).cast("Q")
        self.array = np.frombuffer(self.buf, dtype=np.uint64)
        self.counter_array = np.zeros(3, dtype=np.int64)
        self.crash_hook: Callable[["PersistentRegion"], None] | None = None
        self._seq = 0
        self._pending: list[_Pending] = []
        # (seq, line or -1 for a fence) since the oldest pending store
        self._barriers: list[tuple[int, int]] = []
        self._persisted = bytearray(self.buf) if tracking else None

    # ------------------------------------------------------------------ access

    def _check_word(self, offset: int) -> None:
        if offset % WORD:
            raise AlignmentError(f"offset {offset} is not 8-byte aligned")
        if not 0 <= offset <= self.size - WORD:
            raise AlignmentError(f"offset {offset} outside region of {self.size} bytes")

    def load_word(self, offset: int) -> int:
        self._check_word(offset)
        return self.words[offset >> 3]

    def store_word(self, offset: int, value: int) -> None:
        self._check_word(offset)
        w = offset >> 3
        self.words[w] = value
        if self.tracking:
            self._seq += 1
            self._pending.append(_Pending(self._seq, w, value, offset // self.line_size))
            if self.crash_hook is not None:
                self.crash_hook(self)

    def flush_line(self, offset: int) -> None:
        if not 0 <= offset < self.size:
            raise RangeError(f"flush offset {offset} outside region")
        c = self.counter_array
        c[CTR_FLUSHES] += 1
        c[CTR_DELAY_NS] += self.write_latency_ns
        if self.spin and self.write_latency_ns:
            end = time.perf_counter_ns() + self.write_latency_ns
            while time.perf_counter_ns() < end:
                pass
        if self.tracking:
            line = offset // self.line_size
            self._seq += 1
            for p in self._pending:
                if p.line == line:
                    p.flushed = True
            if self._pending:
                self._barriers.append((self._seq, line))
            if self.crash_hook is not None:
                self.crash_hook(self)

    def fence(self) -> None:
        self.counter_array[CTR_FENCES] += 1
        if self.tracking:
            self._seq += 1
            if self._pending:
                self._barriers.append((self._seq, -1))
                self._retire()
            if self.crash_hook is not None:
                self.crash_hook(self)

    @property
    def counters(self) -> FlushCounters:
        c = self.counter_array
        return FlushCounters(int(c[CTR_FLUSHES]), int(c[CTR_FENCES]), int(c[CTR_DELAY_NS]))

    def reset_counters(self) -> None:
        self.counter_array[:] = 0

    # -------------------------------------------------------------- durability

    def _require_tracking(self) -> None:
        if not self.tracking:
            raise NVMError("persistence tracking is disabled for this region")

    @property
    def dirty_words(self) -> set[int]:
        self._require_tracking()
        return {p.word * WORD for p in self._pending}

    @property
    def persisted_image(self) -> bytes:
        self._require_tracking()
        return bytes(self._persisted)

    def _predecessors(self) -> list[list[int]]:
        """Direct ordering predecessors of each pending store (by list index)."""
        pend = self._pending
        bars = self._barriers
        preds: list[list[int]] = []
        for i, b in enumerate(pend):
            mine = []
            for j in range(i):
                a = pend[j]
                if a.line == b.line:
                    mine.append(j)
                    continue
                for seq, line in bars:
                    if a.seq < seq < b.seq and (line == -1 or line == a.line):
                        mine.append(j)
                        break
            preds.append(mine)
        return preds

    def _retire(self) -> None:
        preds = self._predecessors()
        durable = [p.flushed for p in self._pending]
        for i in range(len(durable) - 1, -1, -1):
            if durable[i]:
                for j in preds[i]:
                    durable[j] = True
        keep = []
        for p, d in zip(self._pending, durable):
            if d:
                struct_off = p.word * WORD
                self._persisted[struct_off:struct_off + WORD] = p.value.to_bytes(WORD, "little")
            else:
                keep.append(p)
        self._pending = keep
        if keep:
            oldest = keep[0].seq
            self._barriers = [b for b in self._barriers if b[0] > oldest]
        else:
            self._barriers = []

    def iter_crash_plans(self) -> Iterator[CrashPlan]:
        """Yield every ordering-consistent subset of pending stores.

        Plans are produced depth-first, excluding before including, so the
        first plan is always the empty one.
        """
        self._require_tracking()
        pend = self._pending
        preds = self._predecessors()
        n = len(pend)
        chosen = [False] * n
        # explicit stack of (index, phase); phase 0 = try exclude, 1 = try include
        stack = [(0, 0)]
        while stack:
            i, phase = stack.pop()
            if i == n:
                seqs = frozenset(pend[k].seq for k in range(n) if chosen[k])
                words = frozenset(pend[k].word * WORD for k in range(n) if chosen[k])
                yield CrashPlan(seqs, words)
                continue
            if phase == 0:
                chosen[i] = False
                stack.append((i, 1))
                stack.append((i + 1, 0))
            elif phase == 1:
                if all(chosen[j] for j in preds[i]):
                    chosen[i] = True
                    stack.append((i, 2))
                    stack.append((i + 1, 0))
            else:
                chosen[i] = False

    def enumerate_crash_plans(self, cap: int | None = None) -> list[CrashPlan]:
        plans = []
        for plan in self.iter_crash_plans():
            plans.append(plan)
            if cap is not None and len(plans) >= cap:
                break
        return plans

    def full_plan(self) -> CrashPlan:
        self._require_tracking()
        return CrashPlan(frozenset(p.seq for p in self._pending),
                         frozenset(p.word * WORD for p in self._pending))

    def plan_writes(self, plan: CrashPlan, *, check: bool = True) -> dict[int, int]:
        """Byte offset -> value that ``plan`` lays over the persisted image."""
        self._require_tracking()
        by_seq = {p.seq: i for i, p in enumerate(self._pending)}
        unknown = plan.stores - by_seq.keys()
        if unknown:
            raise CrashPlanError(f"plan names stores that are not pending: {sorted(unknown)[:5]}")
        idx = sorted(by_seq[s] for s in plan.stores)
        if check:
            preds = self._predecessors()
            chosen = set(idx)
            for i in idx:
                if any(j not in chosen for j in preds[i]):
                    raise CrashPlanError("plan violates flush/fence ordering")
        out = {}
        for i in idx:
            p = self._pending[i]
            out[p.word * WORD] = p.value
        return out

    def crash_image(self, plan: CrashPlan, *, tracking: bool = False) -> "PersistentRegion":
        """Return the memory a recovering process would observe."""
        writes = self.plan_writes(plan)
        return image_region(self, bytes(self._persisted), writes, tracking=tracking)

    def snapshot(self, *, tracking: bool = False) -> "PersistentRegion":
        """Copy of the current volatile contents (not a crash image)."""
        return PersistentRegion(self.size, line_size=self.line_size,
                                write_latency_ns=self.write_latency_ns,
                                tracking=tracking, _data=bytes(self.buf))


def image_region(like: PersistentRegion, base: bytes, writes: dict[int, int], *,
                 tracking: bool = False) -> PersistentRegion:
    """A region holding ``base`` overlaid with ``writes``."""
    image = bytearray(base)
    for off, value in writes.items():
        image[off:off + WORD] = value.to_bytes(WORD, "little")
    return PersistentRegion(like.size, line_size=like.line_size,
                            write_latency_ns=like.write_latency_ns,
                            tracking=tracking, _data=bytes(image))
