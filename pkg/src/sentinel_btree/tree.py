"""B+-tree over a persistent region.

Writers take the fast compiled path first: shared lock crabbing down to the
leaf, an exclusive leaf lock, and an in-place shift.  When the leaf is full
the writer retries pessimistically from the root latch, holding exclusive
locks on every node that may split, and propagates the split upwards.

Leaves are chained by sibling pointers; the superblock records the head
leaf and the root.  Recovery trusts only the leaf chain: it repairs each
leaf, trims keys that a half-finished split left in both halves, and
rebuilds the internal levels and the volatile accelerators.
"""

from __future__ import annotations

from bisect import bisect_left
from contextlib import contextmanager
from typing import Iterator

import numpy as np

from . import accel as A
from . import kernels as K
from . import node_circular as NC
from . import node_linear as NL
from .errors import (BadPointerError, ConfigError, CorruptionError, DuplicateKeyError,
                     KeyNotFoundError)
from .heap import NodeHeap
from .layout import (ACCEL_FINGERPRINT, ACCEL_NONE, ACCEL_SENTINEL, ACCELS, C_LOCKING, C_SEARCH,
                     CIRCULAR, H_FLAGS,
                     H_LEFTMOST, H_SIBLING, KEY_MAX, LINEAR, MAGIC, NIL, NODE_KINDS, SB_HEAD,
                     SB_HEIGHT, SB_KIND, SB_MAGIC, SB_NODE_SIZE, SB_ROOT, SEARCH_BINARY,
                     SEARCHES, ST_BADPTR, ST_DUP, ST_FULL, ST_MISSING, ST_OK, Geometry)
from .metrics import AccessTrace
from .nvm_sim import DEFAULT_WRITE_LATENCY_NS, PersistentRegion

DEFAULT_REGION_SIZE = 1 << 24


def _name(table: dict, value: int) -> str:
    return next(k for k, v in table.items() if v == value)


def validate_config(node_kind: str, accel: str, search: str) -> tuple[int, int, int]:
    if node_kind not in NODE_KINDS:
        raise ConfigError(f"node kind must be one of {sorted(NODE_KINDS)}, got {node_kind!r}")
    if accel not in ACCELS:
        raise ConfigError(f"accelerator must be one of {sorted(ACCELS)}, got {accel!r}")
    if search not in SEARCHES:
        raise ConfigError(f"search must be one of {sorted(SEARCHES)}, got {search!r}")
    if search == "binary" and (accel != "none" or node_kind != "linear"):
        raise ConfigError("binary search is only defined for linear nodes without an accelerator")
    return NODE_KINDS[node_kind], ACCELS[accel], SEARCHES[search]


class BPlusTree:
    def __init__(self, node_kind: str = "linear", node_size: int = 4096, accel: str = "none",
                 search: str = "linear", *, region: PersistentRegion | None = None,
                 region_size: int = DEFAULT_REGION_SIZE,
                 write_latency_ns: int = DEFAULT_WRITE_LATENCY_NS, tracking: bool = False,
                 spin: bool = False, locking: bool = True, _attach: bool = False):
        kind, acc, srch = validate_config(node_kind, accel, search)
        try:
            geom = Geometry(node_size)
        except ValueError as e:
            raise ConfigError(str(e)) from None
        if region is None:
            region = PersistentRegion(region_size, write_latency_ns=write_latency_ns,
                                      tracking=tracking)
        self.region = region
        self.node_kind = node_kind
        self.node_size = node_size
        self.accel = accel
        self.search_kind = search
        self.heap = NodeHeap(region, geom, kind, acc, srch, locking=locking, spin=spin)
        if self.heap.max_nodes < 1:
            raise ConfigError("region too small for a single node")
        self._args = (region.array, self.heap.counts, self.heap.sents, self.heap.fps,
                      self.heap.locks)
        if _attach:
            return
        if region.load_word(SB_MAGIC * 8) == MAGIC:
            raise ConfigError("region already holds a tree; use BPlusTree.recover")
        leaf = self.heap.alloc()
        NL.write_node(self.heap, leaf, [], leaf=True)
        for word, value in ((SB_NODE_SIZE, node_size), (SB_KIND, kind), (SB_HEAD, leaf),
                            (SB_HEIGHT, 1), (SB_ROOT, leaf), (SB_MAGIC, MAGIC)):
            region.store_word(word * 8, value)
        region.flush_line(0)
        region.fence()

    # ------------------------------------------------------------- properties

    @property
    def fast(self) -> bool:
        return not self.region.tracking

    @property
    def root(self) -> int:
        return self.region.words[SB_ROOT]

    @property
    def head(self) -> int:
        return self.region.words[SB_HEAD]

    @property
    def height(self) -> int:
        return self.region.words[SB_HEIGHT]

    @property
    def capacity(self) -> int:
        return self.heap.cap

    def __len__(self) -> int:
        return sum(self.heap.count(leaf) for leaf in self.leaves())

    def leaves(self) -> Iterator[int]:
        off = self.head
        while off != NIL:
            yield off
            off = self.heap.load(off + H_SIBLING * 8)

    def items(self) -> Iterator[tuple[int, int]]:
        for leaf in self.leaves():
            yield from NL.entries(self.heap, leaf)

    def state(self) -> dict[int, int]:
        return dict(self.items())

    # ---------------------------------------------------------------- helpers

    def _child(self, node: int, key: int) -> int:
        return int(K.in_child(self.region.array, node >> 3, self.heap.count(node),
                              np.uint64(key))) << 3

    def _leaf_insert(self, leaf: int, key: int, ref: int) -> None:
        if self.heap.kind == CIRCULAR:
            NC.circ_insert(self.heap, leaf, key, ref)
        else:
            NL.leaf_insert(self.heap, leaf, key, ref)

    def _leaf_delete(self, leaf: int, key: int) -> None:
        if self.heap.kind == CIRCULAR:
            NC.circ_delete(self.heap, leaf, key)
        else:
            NL.leaf_delete(self.heap, leaf, key)

    @contextmanager
    def _leaf_exclusive(self, key: int):
        words, counts, _, _, locks = self._args
        nw, idx = K.descend_leaf_exclusive(words, counts, locks, self.heap.cfg, np.uint64(key))
        try:
            yield int(nw) << 3
        finally:
            if self.heap.cfg[C_LOCKING]:
                K.unlock_exclusive(locks, idx + 1)

    @staticmethod
    def _raise(st: int, key: int, ref: int | None = None) -> None:
        if st == ST_DUP:
            raise DuplicateKeyError(key)
        if st == ST_MISSING:
            raise KeyNotFoundError(key)
        if st == ST_BADPTR:
            raise BadPointerError(f"value reference {ref} already used in the target leaf")

    # ------------------------------------------------------------- operations

    def search(self, key: int, trace: AccessTrace | None = None) -> int | None:
        if not 0 <= key <= KEY_MAX:
            raise ValueError(f"key {key} is not a 64-bit unsigned integer")
        words, counts, sents, fps, locks = self._args
        if trace is None:
            v = K.search_one(words, counts, sents, fps, locks, self.heap.cfg, np.uint64(key))
            return int(v) or None
        nw, idx = K.descend_shared(words, counts, locks, self.heap.cfg, np.uint64(key))
        try:
            return self.leaf_search(int(nw) << 3, key, trace)
        finally:
            if self.heap.cfg[C_LOCKING]:
                K.unlock_shared(locks, idx + 1)

    def leaf_search(self, leaf: int, key: int, trace: AccessTrace | None = None) -> int | None:
        """In-leaf search along the configured path (Python, traceable)."""
        h = self.heap
        if h.accel == ACCEL_SENTINEL:
            return A.sentinel_search(h, leaf, key, trace)
        if h.accel == ACCEL_FINGERPRINT:
            return A.fp_search(h, leaf, key, trace)
        if h.kind == CIRCULAR:
            return NC.circ_search(h, leaf, key, trace)
        if h.cfg[C_SEARCH] == SEARCH_BINARY:
            return NL.leaf_search_binary(h, leaf, key, trace)
        return NL.leaf_search_linear(h, leaf, key, trace)

    def find_leaf(self, key: int) -> int:
        node = self.root
        while not self.heap.is_leaf(node):
            node = self._child(node, key)
        return node

    def insert(self, key: int, ref: int) -> None:
        NL.check_key(key)
        NL.check_ptr(ref)
        if self.fast:
            words, counts, sents, fps, locks = self._args
            st = K.try_insert(words, counts, sents, fps, locks, self.region.counter_array,
                              self.heap.cfg, np.uint64(key), np.uint64(ref))
            if st == ST_OK:
                return
            if st != ST_FULL:
                self._raise(st, key, ref)
        self._insert_pessimistic(key, ref)

    def update(self, key: int, ref: int) -> None:
        NL.check_ptr(ref)
        if not 0 <= key < KEY_MAX:
            raise KeyNotFoundError(key)
        if self.fast:
            words, counts, sents, fps, locks = self._args
            st = K.try_update(words, counts, sents, fps, locks, self.region.counter_array,
                              self.heap.cfg, np.uint64(key), np.uint64(ref))
            self._raise(st, key, ref)
            return
        with self._leaf_exclusive(key) as leaf:
            NL.leaf_update(self.heap, leaf, key, ref)

    def delete(self, key: int) -> None:
        if not 0 <= key < KEY_MAX:
            raise KeyNotFoundError(key)
        if self.fast:
            words, counts, sents, fps, locks = self._args
            st = K.try_delete(words, counts, sents, fps, locks, self.region.counter_array,
                              self.heap.cfg, np.uint64(key))
            self._raise(st, key)
            return
        with self._leaf_exclusive(key) as leaf:
            self._leaf_delete(leaf, key)

    def _insert_pessimistic(self, key: int, ref: int) -> None:
        h = self.heap
        locks = h.locks
        locking = bool(h.cfg[C_LOCKING])
        held: list[int] = []

        def lock(i: int) -> None:
            if locking:
                K.lock_exclusive(locks, i)
            held.append(i)

        def release_above(n_keep: int) -> None:
            while len(held) > n_keep:
                i = held.pop(0)
                if locking:
                    K.unlock_exclusive(locks, i)

        lock(0)
        node = self.root
        lock(h.idx(node) + 1)
        path = [node]
        if h.count(node) < h.cap:
            release_above(1)
        try:
            while not h.is_leaf(node):
                node = self._child(node, key)
                lock(h.idx(node) + 1)
                path.append(node)
                if h.count(node) < h.cap:
                    release_above(1)
                    path = [node]
            latch_held = bool(held) and held[0] == 0
            self._insert_locked_path(path, latch_held, key, ref)
        finally:
            release_above(0)

    def _insert_locked_path(self, path: list[int], latch_held: bool, key: int, ref: int) -> None:
        h = self.heap
        leaf = path[-1]
        ks = NL.keys(h, leaf)
        pos = bisect_left(ks, key)
        if pos < len(ks) and ks[pos] == key:
            raise DuplicateKeyError(key)
        if any(p == ref for _, p in NL.entries(h, leaf)):
            raise BadPointerError(f"value reference {ref} already used in the target leaf")
        if h.count(leaf) < h.cap:
            self._leaf_insert(leaf, key, ref)
            return
        new, sep = NL.leaf_split(h, leaf)
        self._leaf_insert(new if key >= sep else leaf, key, ref)
        for parent in reversed(path[:-1]):
            if h.count(parent) < h.cap:
                NL.leaf_insert(h, parent, sep, new)
                return
            pnew, psep = NL.internal_split(h, parent)
            NL.leaf_insert(h, pnew if sep > psep else parent, sep, new)
            sep, new = psep, pnew
        if not latch_held or path[0] != self.root:
            raise CorruptionError("root split attempted without holding the root latch")
        old = self.root
        level = (h.load(old + H_FLAGS * 8) >> 8) + 1
        root = h.alloc()
        NL.write_node(h, root, [(sep, new)], leaf=False, leftmost=old, level=level)
        self._set_root(root, self.height + 1)

    def _set_root(self, root: int, height: int) -> None:
        r = self.region
        r.store_word(SB_HEIGHT * 8, height)
        r.store_word(SB_ROOT * 8, root)
        r.flush_line(0)
        r.fence()

    # --------------------------------------------------------------- batches

    def run_ops(self, kinds: np.ndarray, keys: np.ndarray, refs: np.ndarray,
                out_vals: np.ndarray | None = None) -> tuple[np.ndarray, np.ndarray]:
        """Execute an op batch through the compiled loop.

        Returns (status, cycles) per op.  Inserts into full leaves fall back to
        the pessimistic path; their cycle count includes the failed attempt.
        """
        n = len(keys)
        kinds = np.ascontiguousarray(kinds, dtype=np.int64)
        keys = np.ascontiguousarray(keys, dtype=np.uint64)
        refs = np.ascontiguousarray(refs, dtype=np.uint64)
        if out_vals is None:
            out_vals = np.zeros(n, dtype=np.uint64)
        status = np.zeros(n, dtype=np.int64)
        cycles = np.zeros(n, dtype=np.uint64)
        if not self.fast:
            raise ConfigError("batched execution needs a region without persistence tracking")
        words, counts, sents, fps, locks = self._args
        i = 0
        while i < n:
            i = K.bench_ops(words, counts, sents, fps, locks, self.region.counter_array,
                            self.heap.cfg, kinds, keys, refs, i, out_vals, status, cycles)
            if i >= n:
                break
            if status[i] == ST_FULL:
                t0 = K.now_cycles()
                self._insert_pessimistic(int(keys[i]), int(refs[i]))
                cycles[i] += K.now_cycles() - t0
                status[i] = ST_OK
            else:
                self._raise(int(status[i]), int(keys[i]), int(refs[i]))
            i += 1
        return status, cycles

    # -------------------------------------------------------------- recovery

    @classmethod
    def recover(cls, region: PersistentRegion, *, accel: str = "none", search: str = "linear",
                spin: bool = False, locking: bool = True) -> "BPlusTree":
        w = region.words
        if region.size < 64 or w[SB_MAGIC] != MAGIC:
            raise CorruptionError("region does not hold a tree (bad magic)")
        kind = w[SB_KIND]
        if kind not in (LINEAR, CIRCULAR):
            raise CorruptionError(f"unknown node kind {kind}")
        tree = cls(_name(NODE_KINDS, kind), int(w[SB_NODE_SIZE]), accel, search, region=region,
                   spin=spin, locking=locking, _attach=True)
        tree._recover()
        return tree

    def _recover(self) -> None:
        h = self.heap
        leaves = []
        seen = set()
        off = self.head
        while off != NIL:
            if not h.contains(off) or off in seen or not h.is_leaf(off):
                raise CorruptionError(f"broken leaf chain at offset {off}")
            seen.add(off)
            leaves.append(off)
            off = h.load(off + H_SIBLING * 8)
        if not leaves:
            raise CorruptionError("tree has no head leaf")
        h.next = max(leaves) + h.block
        for leaf in leaves:
            if h.kind == CIRCULAR:
                NC.recover(h, leaf)
            else:
                NL.leaf_recover(h, leaf)
        for a, b in zip(leaves, leaves[1:]):
            if h.count(b) == 0:
                continue
            ka = NL.keys(h, a)
            cut = bisect_left(ka, NL.keys(h, b)[0])
            if cut < len(ka):
                NL.truncate(h, a, cut)
        self._rebuild_index(leaves)
        self.check_invariants()

    def _rebuild_index(self, leaves: list[int]) -> None:
        h = self.heap
        level_items = [(None, leaves[0])]
        level_items += [(NL.keys(h, leaf)[0], leaf) for leaf in leaves[1:] if h.count(leaf)]
        fan = max(1, h.cap // 2)
        level = 0
        while len(level_items) > 1:
            level += 1
            nxt = []
            for i in range(0, len(level_items), fan + 1):
                chunk = level_items[i:i + fan + 1]
                node = h.alloc()
                NL.write_node(h, node, list(chunk[1:]), leaf=False, leftmost=chunk[0][1],
                              level=level)
                nxt.append((chunk[0][0], node))
            level_items = nxt
        self._set_root(level_items[0][1], level + 1)

    # ------------------------------------------------------------- invariants

    def check_invariants(self) -> bool:
        """Raise CorruptionError unless the tree is structurally sound."""
        h = self.heap
        prev = None
        chain = list(self.leaves())
        for leaf in chain:
            ent = NL.entries(h, leaf)
            for k, p in ent:
                if prev is not None and k <= prev:
                    raise CorruptionError(f"leaf chain not strictly increasing at key {k}")
                if p == NIL:
                    raise CorruptionError("nil value reference inside the valid prefix")
                prev = k
            if h.kind == LINEAR and h.count(leaf) < h.cap:
                if h.load(h.geom.slot_offset(leaf, h.count(leaf)) + 8) != NIL:
                    raise CorruptionError(f"leaf {leaf} not nil-terminated")
            if h.accel == ACCEL_SENTINEL and A.sentinel_of(h, leaf) != A.sentinel_build(h, leaf):
                raise CorruptionError(f"stale sentinel array on leaf {leaf}")
            if h.accel == ACCEL_FINGERPRINT and A.fingerprint_of(h, leaf) != A.fingerprint_build(h, leaf):
                raise CorruptionError(f"stale fingerprints on leaf {leaf}")
        reached: list[int] = []
        depths = set()

        def walk(node: int, lo, hi, depth: int) -> None:
            ks = NL.keys(h, node)
            for k in ks:
                if (lo is not None and k < lo) or (hi is not None and k >= hi):
                    raise CorruptionError(f"key {k} outside separator bounds [{lo}, {hi})")
            if h.is_leaf(node):
                depths.add(depth)
                reached.append(node)
                return
            children = [h.load(node + H_LEFTMOST * 8)] + [p for _, p in NL.entries(h, node)]
            bounds = [lo] + ks + [hi]
            for i, c in enumerate(children):
                walk(c, bounds[i], bounds[i + 1], depth + 1)

        walk(self.root, None, None, 1)
        if len(depths) > 1:
            raise CorruptionError(f"leaves at different depths {sorted(depths)}")
        if depths and depths != {self.height}:
            raise CorruptionError(f"height word {self.height} disagrees with depth {depths}")
        if reached != [leaf for leaf in chain if leaf in set(reached)]:
            raise CorruptionError("index order disagrees with the leaf chain")
        missing = set(chain) - set(reached)
        if any(h.count(leaf) for leaf in missing):
            raise CorruptionError("non-empty leaf unreachable from the root")
        return True


__all__ = ["BPlusTree", "validate_config", "ACCEL_NONE"]
