"""Sorted contiguous nodes with failure-atomic in-place shifting.

Inserts shift the suffix right one slot, copying from the tail towards the
insertion point; deletes shift it left.  Every intermediate state either
contains one adjacent duplicate pointer (the second copy is ignored) or, when
the head slot is being rewritten, two adjacent equal keys with different
pointers (the first copy is ignored).  Recovery collapses those states.

Internal nodes share this layout with ``ptr`` holding a child offset.
"""

from __future__ import annotations

from bisect import bisect_left

import numpy as np

from . import kernels as K
from .errors import BadPointerError, CorruptionError, DuplicateKeyError, KeyNotFoundError, NodeFullError
from .layout import (CIRCULAR, FLAG_LEAF, H_BASECOUNT, H_FLAGS, H_LEFTMOST, H_SIBLING, HDR_WORDS,
                     KEY_MAX, NIL, pack_basecount)
from .metrics import AccessTrace


def check_key(key: int) -> None:
    if not 0 <= key < KEY_MAX:
        raise ValueError(f"key {key} outside [0, 2**64 - 1)")


def check_ptr(ptr: int) -> None:
    if not 0 < ptr <= KEY_MAX:
        raise BadPointerError(f"value reference {ptr} must be a nonzero 64-bit word")


def node_base(heap, node: int) -> int:
    return heap.base(node) if heap.kind == CIRCULAR else 0


def entries(heap, node: int) -> list[tuple[int, int]]:
    """Logical (key, ptr) pairs of a quiescent node."""
    w = heap.region.words
    s0 = (node >> 3) + HDR_WORDS
    cap = heap.cap
    base = node_base(heap, node)
    out = []
    for j in range(heap.count(node)):
        p = (base + j) % cap
        out.append((w[s0 + 2 * p], w[s0 + 2 * p + 1]))
    return out


def keys(heap, node: int) -> list[int]:
    return [k for k, _ in entries(heap, node)]


def _locate(heap, node: int, key: int) -> tuple[int, list[tuple[int, int]]]:
    ent = entries(heap, node)
    return bisect_left([k for k, _ in ent], key), ent


def leaf_insert(heap, node: int, key: int, ptr: int) -> None:
    check_key(key)
    check_ptr(ptr)
    n = heap.count(node)
    if n >= heap.cap:
        raise NodeFullError(f"node at {node} is full")
    pos, ent = _locate(heap, node, key)
    if pos < n and ent[pos][0] == key:
        raise DuplicateKeyError(key)
    if any(p == ptr for _, p in ent):
        raise BadPointerError(f"value reference {ptr} already used in this node")
    plan = heap.new_plan()
    m = K.plan_linear_insert(heap.words, node >> 3, n, pos, np.uint64(key), np.uint64(ptr),
                             heap.cap, *plan)
    heap.apply(*plan, m)
    heap.counts[heap.idx(node)] = n + 1
    if heap.is_leaf(node):
        heap.sync_leaf(node, pos, n, True, False)


def leaf_delete(heap, node: int, key: int) -> None:
    n = heap.count(node)
    pos, ent = _locate(heap, node, key)
    if pos >= n or ent[pos][0] != key:
        raise KeyNotFoundError(key)
    plan = heap.new_plan()
    m = K.plan_linear_delete(heap.words, node >> 3, n, pos, heap.cap, *plan)
    heap.apply(*plan, m)
    heap.counts[heap.idx(node)] = n - 1
    if heap.is_leaf(node):
        heap.sync_leaf(node, pos, n, False, False)


def leaf_update(heap, node: int, key: int, ptr: int) -> None:
    """Replace the value reference of ``key`` with one 8-byte store."""
    check_ptr(ptr)
    pos, ent = _locate(heap, node, key)
    if pos >= len(ent) or ent[pos][0] != key:
        raise KeyNotFoundError(key)
    if any(p == ptr for i, (_, p) in enumerate(ent) if i != pos):
        raise BadPointerError(f"value reference {ptr} already used in this node")
    plan = heap.new_plan()
    slot = (node_base(heap, node) + pos) % heap.cap
    m = K.plan_update(heap.words, node >> 3, slot, np.uint64(ptr), *plan)
    heap.apply(*plan, m)


def leaf_search_linear(heap, node: int, key: int, trace: AccessTrace | None = None) -> int | None:
    """Scan from slot 0 until the key, a larger key or a nil pointer."""
    w = heap.region.words
    s0 = (node >> 3) + HDR_WORDS
    prev = NIL
    for j in range(heap.cap):
        if trace is not None:
            trace.read(heap.geom.slot_offset(node, j), 16)
        ptr = w[s0 + 2 * j + 1]
        if ptr == NIL:
            return None
        k = w[s0 + 2 * j]
        if ptr == prev:
            continue
        prev = ptr
        if k >= key:
            return ptr if k == key else None
    return None


def leaf_search_binary(heap, node: int, key: int, trace: AccessTrace | None = None) -> int | None:
    w = heap.region.words
    s0 = (node >> 3) + HDR_WORDS
    lo, hi = 0, heap.count(node) - 1
    while lo <= hi:
        mid = (lo + hi) >> 1
        if trace is not None:
            trace.read(heap.geom.slot_offset(node, mid))
        k = w[s0 + 2 * mid]
        if k == key:
            if trace is not None:
                trace.read(heap.geom.slot_offset(node, mid) + 8)
            return w[s0 + 2 * mid + 1]
        if k < key:
            lo = mid + 1
        else:
            hi = mid - 1
    return None


# ------------------------------------------------------------------ splitting

def write_node(heap, node: int, items: list[tuple[int, int]], *, leaf: bool, sibling: int = NIL,
               leftmost: int = NIL, level: int = 0) -> None:
    """Fill a fresh (unreachable) block, flush every line, then fence."""
    r = heap.region
    cap = heap.cap
    lines = set()

    def put(word_idx: int, value: int) -> None:
        r.store_word(word_idx << 3, value)
        lines.add(word_idx >> 3)

    nw = node >> 3
    put(nw + H_FLAGS, (FLAG_LEAF if leaf else 0) | (level << 8))
    put(nw + H_SIBLING, sibling)
    put(nw + H_LEFTMOST, leftmost)
    put(nw + H_BASECOUNT, pack_basecount(0, len(items)) if heap.kind == CIRCULAR else 0)
    s0 = nw + HDR_WORDS
    for j, (k, p) in enumerate(items):
        put(s0 + 2 * j, k)
        put(s0 + 2 * j + 1, p)
    if len(items) < cap:
        put(s0 + 2 * len(items) + 1, NIL)
    for line in sorted(lines):
        r.flush_line(line << 6)
    r.fence()
    heap.counts[heap.idx(node)] = len(items)
    if leaf:
        heap.rebuild_accel(node)


def set_sibling(heap, node: int, sibling: int) -> None:
    r = heap.region
    r.store_word(node + H_SIBLING * 8, sibling)
    r.flush_line(node)
    r.fence()


def truncate(heap, node: int, h: int) -> None:
    """Invalidate logical slots h.. of ``node`` (slot h first)."""
    r = heap.region
    n = heap.count(node)
    cap = heap.cap
    base = node_base(heap, node)
    s0 = node + 8 * HDR_WORDS
    cur = None
    for j in range(h, n):
        off = s0 + 16 * ((base + j) % cap) + 8
        if cur is not None and off >> 6 != cur:
            r.flush_line(cur << 6)
        r.store_word(off, NIL)
        cur = off >> 6
    if cur is not None:
        r.flush_line(cur << 6)
    if heap.kind == CIRCULAR and heap.is_leaf(node):
        r.store_word(node + H_BASECOUNT * 8, pack_basecount(base, h))
        r.flush_line(node)
    r.fence()
    heap.counts[heap.idx(node)] = h
    if heap.is_leaf(node):
        heap.rebuild_accel(node)


def leaf_split(heap, node: int) -> tuple[int, int]:
    """Move the upper half into a new right sibling; returns (new node, separator)."""
    ent = entries(heap, node)
    h = len(ent) // 2
    new = heap.alloc()
    sib = heap.load(node + H_SIBLING * 8)
    write_node(heap, new, ent[h:], leaf=True, sibling=sib)
    set_sibling(heap, node, new)
    truncate(heap, node, h)
    return new, ent[h][0]


def internal_split(heap, node: int) -> tuple[int, int]:
    """Split an internal node; the middle key moves up and its child becomes
    the new node's leftmost child."""
    ent = entries(heap, node)
    h = len(ent) // 2
    new = heap.alloc()
    level = heap.load(node + H_FLAGS * 8) >> 8
    write_node(heap, new, ent[h + 1:], leaf=False, leftmost=ent[h][1], level=level)
    truncate(heap, node, h)
    return new, ent[h][0]


# ------------------------------------------------------------------- recovery

def scan_raw(heap, node: int, base: int, ring: bool) -> list[tuple[int, int]]:
    w = heap.region.words
    s0 = (node >> 3) + HDR_WORDS
    cap = heap.cap
    raw = []
    for j in range(cap):
        p = (base + j) % cap
        ptr = w[s0 + 2 * p + 1]
        if ptr == NIL:
            break
        raw.append((w[s0 + 2 * p], ptr))
    if ring and len(raw) == cap > 1 and (raw[-1][1] == raw[0][1] or raw[-1][0] == raw[0][0]):
        raw.pop()
    return raw


def collapse(raw: list[tuple[int, int]]) -> list[tuple[int, int]]:
    """Drop the stale copy left by an interrupted shift."""
    keep = []
    for i, (k, p) in enumerate(raw):
        if i > 0 and p == raw[i - 1][1]:
            continue
        if i + 1 < len(raw) and k == raw[i + 1][0] and p != raw[i + 1][1]:
            continue
        keep.append((k, p))
    for i in range(1, len(keep)):
        if keep[i - 1][0] >= keep[i][0]:
            raise CorruptionError(f"unsorted entries {keep[i - 1][0]} >= {keep[i][0]}")
    if len({p for _, p in keep}) != len(keep):
        raise CorruptionError("duplicate value references after recovery")
    return keep


def rewrite(heap, node: int, base: int, items: list[tuple[int, int]], raw_len: int) -> None:
    """Store ``items`` compactly from logical slot 0 and nil every other slot."""
    r = heap.region
    w = r.words
    cap = heap.cap
    s0 = (node >> 3) + HDR_WORDS
    lines = set()
    for j in range(cap):
        p = (base + j) % cap
        kw, pw = s0 + 2 * p, s0 + 2 * p + 1
        if j < len(items):
            k, v = items[j]
            if w[kw] != k:
                r.store_word(kw << 3, k)
                lines.add(kw >> 3)
            if w[pw] != v:
                r.store_word(pw << 3, v)
                lines.add(pw >> 3)
        elif w[pw] != NIL:
            r.store_word(pw << 3, NIL)
            lines.add(pw >> 3)
    if heap.kind == CIRCULAR and heap.is_leaf(node):
        hw = (node >> 3) + H_BASECOUNT
        want = pack_basecount(base, len(items))
        if w[hw] != want:
            r.store_word(hw << 3, want)
            lines.add(hw >> 3)
    for line in sorted(lines):
        r.flush_line(line << 6)
    if lines:
        r.fence()


def leaf_recover(heap, node: int) -> int:
    """Repair a leaf after a crash and recompute its count; returns the count."""
    raw = scan_raw(heap, node, 0, ring=False)
    items = collapse(raw)
    rewrite(heap, node, 0, items, len(raw))
    heap.counts[heap.idx(node)] = len(items)
    heap.rebuild_accel(node)
    return len(items)
