"""In-node search accelerators: sentinel arrays and 1-byte fingerprints.

Both live in volatile memory next to the node heap and are never flushed;
every leaf mutation refreshes the affected part and recovery rebuilds them
from the node's keys.

A sentinel is the smallest key of one cache line worth of logical entries
(COUNT_IN_LINE = 4).  Lines without valid entries carry KEY_MAX so the
probing loop stops before them.  Sentinel 0 is kept for alignment but never
probed, so only sentinels 1.. occupy traced memory.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels as K
from .layout import ACCEL_FINGERPRINT, ACCEL_SENTINEL, COUNT_IN_LINE, HDR_WORDS, KEY_MAX
from .metrics import AccessTrace


@dataclass
class SentinelArray:
    sentinels: np.ndarray
    count_in_line: int = COUNT_IN_LINE

    def __eq__(self, other):
        return (isinstance(other, SentinelArray) and self.count_in_line == other.count_in_line
                and np.array_equal(self.sentinels, other.sentinels))

    @property
    def cache_lines(self) -> int:
        return -(-self.sentinels.size * 8 // 64)


@dataclass
class FingerprintArray:
    fp: np.ndarray

    def __eq__(self, other):
        return isinstance(other, FingerprintArray) and np.array_equal(self.fp, other.fp)


def fingerprint_byte(key: int) -> int:
    """Low byte of the 64-bit MurmurHash3 finaliser."""
    m = (1 << 64) - 1
    k = key & m
    k ^= k >> 33
    k = (k * 0xFF51AFD7ED558CCD) & m
    k ^= k >> 33
    k = (k * 0xC4CEB9FE1A85EC53) & m
    k ^= k >> 33
    return k & 0xFF


def _logical(heap, node: int) -> list[tuple[int, int, int]]:
    """(physical slot, key, ptr) in logical order."""
    from .node_linear import node_base
    w = heap.region.words
    s0 = (node >> 3) + HDR_WORDS
    base = node_base(heap, node)
    out = []
    for j in range(heap.count(node)):
        p = (base + j) % heap.cap
        out.append((p, w[s0 + 2 * p], w[s0 + 2 * p + 1]))
    return out


def sentinel_build(heap, node: int) -> SentinelArray:
    sents = np.full(max(heap.nlines, 1), KEY_MAX, dtype=np.uint64)
    for j, (_, k, _) in enumerate(_logical(heap, node)):
        if j % COUNT_IN_LINE == 0:
            sents[j // COUNT_IN_LINE] = k
    return SentinelArray(sents)


def sentinel_of(heap, node: int) -> SentinelArray:
    """The maintained sentinel array of a leaf (a copy)."""
    if heap.accel != ACCEL_SENTINEL:
        raise ValueError("tree was built without sentinel arrays")
    return SentinelArray(heap.sents[heap.idx(node)].copy())


def sentinel_locate(sa: SentinelArray, key: int, trace: AccessTrace | None = None,
                    addr=None) -> int:
    """First logical slot of the line that may hold ``key``.

    ``addr(i)`` maps sentinel i to a traced address.
    """
    begin = 0
    s = sa.sentinels
    for i in range(1, s.size):
        if trace is not None and addr is not None:
            trace.read(addr(i))
        if key < s[i]:
            break
        begin += sa.count_in_line
    return begin


def sentinel_search(heap, node: int, key: int, trace: AccessTrace | None = None) -> int | None:
    """Locate the line through the sentinels, then scan only that line."""
    sa = SentinelArray(heap.sents[heap.idx(node)])
    begin = sentinel_locate(sa, key, trace, lambda i: heap.sentinel_addr(node, i))
    ent = _logical(heap, node)
    for j in range(begin, min(begin + COUNT_IN_LINE, len(ent))):
        p, k, ptr = ent[j]
        if trace is not None:
            trace.read(heap.geom.slot_offset(node, p), 16)
        if k >= key:
            return ptr if k == key else None
    return None


def sentinel_sync(heap, node: int, first_line: int, last_line: int) -> None:
    """Recompute sentinels of logical lines [first_line, last_line); no flushes."""
    K.sync_sentinels(heap.region.array, heap.counts, heap.sents, heap.cfg, node >> 3,
                     heap.idx(node), first_line, last_line)


def sentinel_rebuild_after_crash(heap, node: int) -> SentinelArray:
    sentinel_sync(heap, node, 0, heap.nlines)
    return sentinel_of(heap, node)


def fingerprint_build(heap, node: int) -> FingerprintArray:
    fp = np.zeros(heap.cap, dtype=np.uint8)
    for p, k, _ in _logical(heap, node):
        fp[p] = fingerprint_byte(k)
    return FingerprintArray(fp)


def fingerprint_of(heap, node: int) -> FingerprintArray:
    """Maintained fingerprints restricted to valid slots (others zeroed)."""
    if heap.accel != ACCEL_FINGERPRINT:
        raise ValueError("tree was built without fingerprint arrays")
    fp = np.zeros(heap.cap, dtype=np.uint8)
    row = heap.fps[heap.idx(node)]
    for p, _, _ in _logical(heap, node):
        fp[p] = row[p]
    return FingerprintArray(fp)


def fp_search(heap, node: int, key: int, trace: AccessTrace | None = None,
              stats: dict | None = None) -> int | None:
    """Scan fingerprints; compare the full key only on a byte match."""
    h = fingerprint_byte(key)
    row = heap.fps[heap.idx(node)]
    for p, k, ptr in _logical(heap, node):
        if trace is not None:
            trace.read(heap.fingerprint_addr(node, p), 1)
        if row[p] != h:
            continue
        if stats is not None:
            stats["compares"] = stats.get("compares", 0) + 1
        if trace is not None:
            trace.read(heap.geom.slot_offset(node, p), 16)
        if k == key:
            return ptr
    return None
