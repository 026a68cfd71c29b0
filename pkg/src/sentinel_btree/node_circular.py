"""Ring-buffer leaves with a logical base (bidirectional shifting).

Logical slot i lives at physical slot (base + i) mod capacity.  The base and
a count hint share header word 1, so one 8-byte store moves both.  An insert
at logical position p shifts the p entries on its left one slot left (and
moves the base) when that is fewer moves than shifting the n - p entries on
its right; ties go left unless the left side is empty.
"""

from __future__ import annotations

import numpy as np

from . import kernels as K
from .errors import BadPointerError, CorruptionError, DuplicateKeyError, KeyNotFoundError, NodeFullError
from .layout import HDR_WORDS, NIL
from .metrics import AccessTrace
from .node_linear import (_locate, check_key, check_ptr, collapse, entries, leaf_split, rewrite,
                          scan_raw)


def logical_index(heap, node: int, i: int) -> int:
    if not 0 <= i < heap.cap:
        raise IndexError(f"logical position {i} outside [0, {heap.cap})")
    return (heap.base(node) + i) % heap.cap


def insert_side(n: int, pos: int) -> str:
    return "left" if K.circ_insert_left(n, pos) else "right"


def delete_side(n: int, pos: int) -> str:
    return "left" if K.circ_delete_left(n, pos) else "right"


def shift_count(n: int, pos: int, side: str, insert: bool = True) -> int:
    if insert:
        return pos if side == "left" else n - pos
    return pos if side == "left" else n - 1 - pos


def circ_insert(heap, node: int, key: int, ptr: int) -> str:
    """Insert and return the side that was shifted."""
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
    m = K.plan_circ_insert(heap.words, node >> 3, n, pos, np.uint64(key), np.uint64(ptr),
                           heap.cap, *plan)
    heap.apply(*plan, m)
    heap.counts[heap.idx(node)] = n + 1
    left = bool(K.circ_insert_left(n, pos))
    heap.sync_leaf(node, pos, n, True, left)
    return "left" if left else "right"


def circ_delete(heap, node: int, key: int) -> str:
    n = heap.count(node)
    pos, ent = _locate(heap, node, key)
    if pos >= n or ent[pos][0] != key:
        raise KeyNotFoundError(key)
    plan = heap.new_plan()
    m = K.plan_circ_delete(heap.words, node >> 3, n, pos, heap.cap, *plan)
    heap.apply(*plan, m)
    heap.counts[heap.idx(node)] = n - 1
    left = bool(K.circ_delete_left(n, pos))
    heap.sync_leaf(node, pos, n, False, left)
    return "left" if left else "right"


def circ_search(heap, node: int, key: int, trace: AccessTrace | None = None) -> int | None:
    """Linear scan in logical order from the base."""
    w = heap.region.words
    s0 = (node >> 3) + HDR_WORDS
    cap = heap.cap
    base = heap.base(node)
    for j in range(heap.count(node)):
        p = (base + j) % cap
        if trace is not None:
            trace.read(heap.geom.slot_offset(node, p), 16)
        k = w[s0 + 2 * p]
        if k >= key:
            return w[s0 + 2 * p + 1] if k == key else None
    return None


def split(heap, node: int) -> tuple[int, int]:
    return leaf_split(heap, node)


def recover(heap, node: int) -> int:
    base = heap.base(node)
    if base >= heap.cap:
        raise CorruptionError(f"base {base} outside a ring of {heap.cap} slots")
    raw = scan_raw(heap, node, base, ring=True)
    items = collapse(raw)
    rewrite(heap, node, base, items, len(raw))
    heap.counts[heap.idx(node)] = len(items)
    heap.rebuild_accel(node)
    return len(items)


__all__ = ["logical_index", "circ_insert", "circ_delete", "circ_search", "split", "recover",
           "insert_side", "delete_side", "shift_count", "entries", "NIL"]
