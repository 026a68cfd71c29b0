"""Compiled hot paths.

Mutations are expressed as *plans*: arrays of (kind, word index, value)
events that are either replayed through a ``PersistentRegion`` (tracked,
crash-testable) or applied directly by ``apply_events`` (benchmarks).  Both
paths execute the same store order.

Flush events carry the index of any word in the line to flush.
"""

import numpy as np
from numba import njit

from ._atomics import atomic_add, atomic_cas, atomic_load, cpu_yield, rdtsc
from .layout import (ACCEL_FINGERPRINT, ACCEL_SENTINEL, C_ACCEL, C_BLOCK_W, C_CAP, C_HEAP_W,
                     C_KIND, C_LATENCY_NS, C_LOCKING, C_NLINES, C_SEARCH, C_SPIN_CYCLES,
                     CIRCULAR, COUNT_IN_LINE, EV_FENCE, EV_FLUSH, EV_STORE, H_BASECOUNT,
                     H_FLAGS, H_LEFTMOST, HDR_WORDS, SB_ROOT, SEARCH_BINARY, ST_BADPTR, ST_DUP,
                     ST_FULL, ST_MISSING, ST_OK)
from .nvm_sim import CTR_DELAY_NS, CTR_FENCES, CTR_FLUSHES

jit = njit(nogil=True, cache=True)
# small helpers are inlined at the numba IR level so no call boundary is left
inline = njit(nogil=True, cache=True, inline="always")

U0 = np.uint64(0)
ONE = np.uint64(1)
KMAX = np.uint64(0xFFFFFFFFFFFFFFFF)
M32 = np.uint64(0xFFFFFFFF)
S32 = np.uint64(32)
S33 = np.uint64(33)
FM1 = np.uint64(0xFF51AFD7ED558CCD)
FM2 = np.uint64(0xC4CEB9FE1A85EC53)
B8 = np.uint64(0xFF)
CIL = COUNT_IN_LINE
SPL_MASK = 7  # sentinels per 64-byte line, minus one
SPIN_LIMIT = 64

OP_SEARCH = 0
OP_UPDATE = 1
OP_INSERT = 2
OP_DELETE = 3


@inline
def fingerprint(key):
    k = key
    k ^= k >> S33
    k *= FM1
    k ^= k >> S33
    k *= FM2
    k ^= k >> S33
    return np.uint8(k & B8)


@jit
def now_cycles():
    return rdtsc()


# ---------------------------------------------------------------------- locks

@inline
def lock_shared(locks, i):
    spins = 0
    while True:
        v = atomic_load(locks, i)
        if v >= 0:
            if atomic_cas(locks, i, v, v + 1) == v:
                return
        else:
            spins += 1
            if spins >= SPIN_LIMIT:
                cpu_yield()
                spins = 0


@inline
def unlock_shared(locks, i):
    atomic_add(locks, i, -1)


@inline
def lock_exclusive(locks, i):
    spins = 0
    while atomic_cas(locks, i, 0, -1) != 0:
        spins += 1
        if spins >= SPIN_LIMIT:
            cpu_yield()
            spins = 0


@inline
def unlock_exclusive(locks, i):
    atomic_add(locks, i, 1)


# ------------------------------------------------------------------- geometry

@inline
def phys(base, j, cap):
    p = base + j
    if p >= cap:
        p -= cap
    elif p < 0:
        p += cap
    return p


@inline
def node_base(words, cfg, nw):
    if cfg[C_KIND] == CIRCULAR:
        return np.int64(words[nw + H_BASECOUNT] & M32)
    return 0


@inline
def is_leaf(words, nw):
    return (words[nw + H_FLAGS] & ONE) != U0


@inline
def node_idx(cfg, nw):
    return (nw - cfg[C_HEAP_W]) // cfg[C_BLOCK_W]


@jit
def lower_bound(words, s0, n, base, cap, key):
    lo = 0
    hi = n
    while lo < hi:
        mid = (lo + hi) >> 1
        if words[s0 + 2 * phys(base, mid, cap)] < key:
            lo = mid + 1
        else:
            hi = mid
    return lo


@jit
def circ_insert_left(n, pos):
    return pos < n - pos or (pos == n - pos and pos > 0)


@jit
def circ_delete_left(n, pos):
    return pos < n - 1 - pos or (pos == n - 1 - pos and pos > 0)


# -------------------------------------------------------------------- planners

@jit
def _store(ek, ew, ev, m, cur, w, v):
    line = w >> 3
    if cur != -1 and line != cur:
        ek[m] = EV_FLUSH
        ew[m] = cur << 3
        ev[m] = U0
        m += 1
    ek[m] = EV_STORE
    ew[m] = w
    ev[m] = v
    return m + 1, line


@jit
def _flush(ek, ew, ev, m, cur):
    if cur != -1:
        ek[m] = EV_FLUSH
        ew[m] = cur << 3
        ev[m] = U0
        m += 1
    return m


@jit
def _fence(ek, ew, ev, m):
    ek[m] = EV_FENCE
    ew[m] = 0
    ev[m] = U0
    return m + 1


@jit
def plan_size(cap):
    return 6 * cap + 32


@jit
def _shift_right(words, s0, n, pos, base, cap, key, ptr, ek, ew, ev, m):
    cur = -1
    for t in range(n, pos, -1):
        dst = s0 + 2 * phys(base, t, cap)
        src = s0 + 2 * phys(base, t - 1, cap)
        m, cur = _store(ek, ew, ev, m, cur, dst + 1, words[src + 1])
        m, cur = _store(ek, ew, ev, m, cur, dst, words[src])
    dst = s0 + 2 * phys(base, pos, cap)
    if pos == n:
        m, cur = _store(ek, ew, ev, m, cur, dst, key)
        m, cur = _store(ek, ew, ev, m, cur, dst + 1, ptr)
    elif pos > 0:
        src = s0 + 2 * phys(base, pos - 1, cap)
        m, cur = _store(ek, ew, ev, m, cur, dst + 1, words[src + 1])
        m, cur = _store(ek, ew, ev, m, cur, dst, key)
        m, cur = _store(ek, ew, ev, m, cur, dst + 1, ptr)
    else:
        m, cur = _store(ek, ew, ev, m, cur, dst + 1, ptr)
        m, cur = _store(ek, ew, ev, m, cur, dst, key)
    return _flush(ek, ew, ev, m, cur)


@jit
def _shift_left(words, s0, n, pos, base, cap, ek, ew, ev, m):
    cur = -1
    if pos > 0 and pos < n - 1:
        dst = s0 + 2 * phys(base, pos, cap)
        src = s0 + 2 * phys(base, pos - 1, cap)
        m, cur = _store(ek, ew, ev, m, cur, dst + 1, words[src + 1])
    for t in range(pos, n - 1):
        dst = s0 + 2 * phys(base, t, cap)
        src = s0 + 2 * phys(base, t + 1, cap)
        m, cur = _store(ek, ew, ev, m, cur, dst, words[src])
        m, cur = _store(ek, ew, ev, m, cur, dst + 1, words[src + 1])
    last = s0 + 2 * phys(base, n - 1, cap)
    m, cur = _store(ek, ew, ev, m, cur, last + 1, U0)
    return _flush(ek, ew, ev, m, cur)


@jit
def plan_linear_insert(words, nw, n, pos, key, ptr, cap, ek, ew, ev):
    m = _shift_right(words, nw + HDR_WORDS, n, pos, 0, cap, key, ptr, ek, ew, ev, 0)
    return _fence(ek, ew, ev, m)


@jit
def plan_linear_delete(words, nw, n, pos, cap, ek, ew, ev):
    m = _shift_left(words, nw + HDR_WORDS, n, pos, 0, cap, ek, ew, ev, 0)
    return _fence(ek, ew, ev, m)


@jit
def _header(base, n):
    return np.uint64(base) | (np.uint64(n) << S32)


@jit
def plan_circ_insert(words, nw, n, pos, key, ptr, cap, ek, ew, ev):
    s0 = nw + HDR_WORDS
    base = np.int64(words[nw + H_BASECOUNT] & M32)
    hw = nw + H_BASECOUNT
    m = 0
    if not circ_insert_left(n, pos):
        m = _shift_right(words, s0, n, pos, base, cap, key, ptr, ek, ew, ev, m)
        m, cur = _store(ek, ew, ev, m, -1, hw, _header(base, n + 1))
        m = _flush(ek, ew, ev, m, cur)
        return _fence(ek, ew, ev, m)
    nb = phys(base, -1, cap)
    b0 = s0 + 2 * base
    d0 = s0 + 2 * nb
    cur = -1
    m, cur = _store(ek, ew, ev, m, cur, d0, words[b0])
    m, cur = _store(ek, ew, ev, m, cur, d0 + 1, ptr if pos == 0 else words[b0 + 1])
    m = _flush(ek, ew, ev, m, cur)
    m, cur = _store(ek, ew, ev, m, -1, hw, _header(nb, n + 1))
    m = _flush(ek, ew, ev, m, cur)
    cur = -1
    if pos == 0:
        m, cur = _store(ek, ew, ev, m, cur, d0, key)
    else:
        for j in range(1, pos):
            dst = s0 + 2 * phys(nb, j, cap)
            src = s0 + 2 * phys(base, j, cap)
            m, cur = _store(ek, ew, ev, m, cur, dst, words[src])
            m, cur = _store(ek, ew, ev, m, cur, dst + 1, words[src + 1])
        dst = s0 + 2 * phys(nb, pos, cap)
        m, cur = _store(ek, ew, ev, m, cur, dst, key)
        m, cur = _store(ek, ew, ev, m, cur, dst + 1, ptr)
    m = _flush(ek, ew, ev, m, cur)
    return _fence(ek, ew, ev, m)


@jit
def plan_circ_delete(words, nw, n, pos, cap, ek, ew, ev):
    s0 = nw + HDR_WORDS
    base = np.int64(words[nw + H_BASECOUNT] & M32)
    hw = nw + H_BASECOUNT
    m = 0
    if not circ_delete_left(n, pos):
        m = _shift_left(words, s0, n, pos, base, cap, ek, ew, ev, m)
        m, cur = _store(ek, ew, ev, m, -1, hw, _header(base, n - 1))
        m = _flush(ek, ew, ev, m, cur)
        return _fence(ek, ew, ev, m)
    cur = -1
    if pos == 0:
        b0 = s0 + 2 * base
        b1 = s0 + 2 * phys(base, 1, cap)
        m, cur = _store(ek, ew, ev, m, cur, b0, words[b1])
    else:
        for j in range(pos, 0, -1):
            dst = s0 + 2 * phys(base, j, cap)
            src = s0 + 2 * phys(base, j - 1, cap)
            m, cur = _store(ek, ew, ev, m, cur, dst + 1, words[src + 1])
            m, cur = _store(ek, ew, ev, m, cur, dst, words[src])
    m = _flush(ek, ew, ev, m, cur)
    m, cur = _store(ek, ew, ev, m, -1, hw, _header(phys(base, 1, cap), n - 1))
    m = _flush(ek, ew, ev, m, cur)
    m, cur = _store(ek, ew, ev, m, -1, s0 + 2 * base + 1, U0)
    m = _flush(ek, ew, ev, m, cur)
    return _fence(ek, ew, ev, m)


@jit
def plan_update(words, nw, slot_phys, ptr, ek, ew, ev):
    w = nw + HDR_WORDS + 2 * slot_phys + 1
    m, cur = _store(ek, ew, ev, 0, -1, w, ptr)
    m = _flush(ek, ew, ev, m, cur)
    return _fence(ek, ew, ev, m)


@jit
def apply_events(words, counters, cfg, ek, ew, ev, m):
    lat = cfg[C_LATENCY_NS]
    spin = cfg[C_SPIN_CYCLES]
    for e in range(m):
        k = ek[e]
        if k == EV_STORE:
            words[ew[e]] = ev[e]
        elif k == EV_FLUSH:
            atomic_add(counters, CTR_FLUSHES, 1)
            atomic_add(counters, CTR_DELAY_NS, lat)
            if spin > 0:
                end = rdtsc() + np.uint64(spin)
                while rdtsc() < end:
                    pass
        else:
            atomic_add(counters, CTR_FENCES, 1)


# ------------------------------------------------------------- accelerators

@jit
def sync_sentinels(words, counts, sents, cfg, nw, idx, first, last):
    """Recompute sentinels of logical lines [first, last)."""
    n = counts[idx]
    s0 = nw + HDR_WORDS
    cap = cfg[C_CAP]
    base = node_base(words, cfg, nw)
    for line in range(first, min(last, cfg[C_NLINES])):
        j = line * CIL
        if j < n:
            sents[idx, line] = words[s0 + 2 * phys(base, j, cap)]
        else:
            sents[idx, line] = KMAX


@jit
def sync_fingerprints(words, fps, cfg, nw, idx, lo, hi):
    """Recompute fingerprints of logical slots [lo, hi)."""
    s0 = nw + HDR_WORDS
    cap = cfg[C_CAP]
    base = node_base(words, cfg, nw)
    for j in range(lo, hi):
        p = phys(base, j, cap)
        fps[idx, p] = fingerprint(words[s0 + 2 * p])


@jit
def rebuild_accel(words, counts, sents, fps, cfg, nw, idx):
    accel = cfg[C_ACCEL]
    if accel == ACCEL_SENTINEL:
        sync_sentinels(words, counts, sents, cfg, nw, idx, 0, cfg[C_NLINES])
    elif accel == ACCEL_FINGERPRINT:
        sync_fingerprints(words, fps, cfg, nw, idx, 0, counts[idx])


@jit
def _post_sync(words, counts, sents, fps, cfg, nw, idx, pos, n_before, inserted, left):
    accel = cfg[C_ACCEL]
    n_after = counts[idx]
    if accel == ACCEL_SENTINEL:
        top = n_after if inserted else n_before
        sync_sentinels(words, counts, sents, cfg, nw, idx, pos // CIL, (top - 1) // CIL + 1)
    elif accel == ACCEL_FINGERPRINT:
        if left:
            hi = pos + 1 if inserted else pos
            sync_fingerprints(words, fps, cfg, nw, idx, 0, hi)
        else:
            sync_fingerprints(words, fps, cfg, nw, idx, pos, n_after)


# ------------------------------------------------------------------ lookups

@inline
def in_child(words, nw, n, key):
    s0 = nw + HDR_WORDS
    i = 0
    while i + CIL <= n and words[s0 + 2 * (i + CIL - 1)] <= key:
        i += CIL
    for i in range(i, n):
        if key < words[s0 + 2 * i]:
            if i == 0:
                return np.int64(words[nw + H_LEFTMOST]) >> 3
            return np.int64(words[s0 + 2 * i - 1]) >> 3
    if n == 0:
        return np.int64(words[nw + H_LEFTMOST]) >> 3
    return np.int64(words[s0 + 2 * n - 1]) >> 3


@inline
def _scan_keys(words, s0, lo, hi, key):
    """Scan physical slots [lo, hi): slot of ``key``, -2 once passed, -1 if not reached.

    Skips a run of CIL slots when its last key is still below ``key``; the
    lines touched are the same as for a slot-by-slot scan.
    """
    p = lo
    while p + CIL <= hi:
        if words[s0 + 2 * (p + CIL - 1)] >= key:
            break
        p += CIL
    while p < hi:
        k = words[s0 + 2 * p]
        if k >= key:
            return p if k == key else -2
        p += 1
    return -1


@inline
def _scan_logical(words, s0, base, cap, a, b, key):
    """Scan logical slots [a, b) as at most two contiguous physical runs."""
    if a >= b:
        return -1
    p0 = base + a
    if p0 >= cap:
        p0 -= cap
    end = p0 + (b - a)
    if end <= cap:
        return _scan_keys(words, s0, p0, end, key)
    r = _scan_keys(words, s0, p0, cap, key)
    if r != -1:
        return r
    return _scan_keys(words, s0, 0, end - cap, key)


@inline
def _scan_fps(words, s0, fps, idx, h, lo, hi, key):
    for p in range(lo, hi):
        if fps[idx, p] == h and words[s0 + 2 * p] == key:
            return p
    return -1


@inline
def _find_sentinel(words, sents, idx, nlines, s0, base, cap, n, key):
    # first i >= 1 with key < sentinel i; a cache line of sentinels is skipped
    # whole when its last entry is still <= key
    i = 1
    while (i | SPL_MASK) < nlines and key >= sents[idx, i | SPL_MASK]:
        i = (i | SPL_MASK) + 1
    while i < nlines and key >= sents[idx, i]:
        i += 1
    begin = (i - 1) * CIL
    r = _scan_logical(words, s0, base, cap, begin, min(begin + CIL, n), key)
    return r if r >= 0 else -1


@inline
def _find_fp(words, fps, idx, s0, base, cap, n, key):
    h = fingerprint(key)
    end = base + n
    if end <= cap:
        return _scan_fps(words, s0, fps, idx, h, base, end, key)
    r = _scan_fps(words, s0, fps, idx, h, base, cap, key)
    if r >= 0:
        return r
    return _scan_fps(words, s0, fps, idx, h, 0, end - cap, key)


@inline
def _find_binary(words, s0, n, key):
    lo = 0
    hi = n - 1
    while lo <= hi:
        mid = (lo + hi) >> 1
        k = words[s0 + 2 * mid]
        if k == key:
            return mid
        if k < key:
            lo = mid + 1
        else:
            hi = mid - 1
    return -1


@inline
def _find_plain(words, s0, base, cap, n, key):
    r = _scan_logical(words, s0, base, cap, 0, n, key)
    return r if r >= 0 else -1


@inline
def leaf_find(words, counts, sents, fps, cfg, nw, idx, key):
    """Physical slot holding ``key`` in the leaf, or -1."""
    n = counts[idx]
    s0 = nw + HDR_WORDS
    cap = cfg[C_CAP]
    base = node_base(words, cfg, nw)
    accel = cfg[C_ACCEL]
    if accel == ACCEL_SENTINEL:
        return _find_sentinel(words, sents, idx, cfg[C_NLINES], s0, base, cap, n, key)
    if accel == ACCEL_FINGERPRINT:
        return _find_fp(words, fps, idx, s0, base, cap, n, key)
    if cfg[C_SEARCH] == SEARCH_BINARY:
        return _find_binary(words, s0, n, key)
    return _find_plain(words, s0, base, cap, n, key)


@jit
def descend_shared(words, counts, locks, cfg, key):
    locking = cfg[C_LOCKING] != 0
    hw = cfg[C_HEAP_W]
    bw = cfg[C_BLOCK_W]
    if locking:
        lock_shared(locks, 0)
    nw = np.int64(words[SB_ROOT]) >> 3
    idx = (nw - hw) // bw
    if locking:
        lock_shared(locks, idx + 1)
        unlock_shared(locks, 0)
    while not is_leaf(words, nw):
        c = in_child(words, nw, counts[idx], key)
        cidx = (c - hw) // bw
        if locking:
            lock_shared(locks, cidx + 1)
            unlock_shared(locks, idx + 1)
        nw = c
        idx = cidx
    return nw, idx


@jit
def descend_leaf_exclusive(words, counts, locks, cfg, key):
    locking = cfg[C_LOCKING] != 0
    hw = cfg[C_HEAP_W]
    bw = cfg[C_BLOCK_W]
    if locking:
        lock_shared(locks, 0)
    nw = np.int64(words[SB_ROOT]) >> 3
    idx = (nw - hw) // bw
    if is_leaf(words, nw):
        if locking:
            lock_exclusive(locks, idx + 1)
            unlock_shared(locks, 0)
        return nw, idx
    if locking:
        lock_shared(locks, idx + 1)
        unlock_shared(locks, 0)
    while True:
        c = in_child(words, nw, counts[idx], key)
        cidx = (c - hw) // bw
        if is_leaf(words, c):
            if locking:
                lock_exclusive(locks, cidx + 1)
                unlock_shared(locks, idx + 1)
            return c, cidx
        if locking:
            lock_shared(locks, cidx + 1)
            unlock_shared(locks, idx + 1)
        nw = c
        idx = cidx


@jit
def search_one(words, counts, sents, fps, locks, cfg, key):
    nw, idx = descend_shared(words, counts, locks, cfg, key)
    p = leaf_find(words, counts, sents, fps, cfg, nw, idx, key)
    v = U0
    if p >= 0:
        v = words[nw + HDR_WORDS + 2 * p + 1]
    if cfg[C_LOCKING] != 0:
        unlock_shared(locks, idx + 1)
    return v


# ---------------------------------------------------------------- mutations

@jit
def leaf_insert_locked(words, counts, sents, fps, counters, cfg, nw, idx, key, ptr):
    n = counts[idx]
    cap = cfg[C_CAP]
    if n >= cap:
        return ST_FULL
    s0 = nw + HDR_WORDS
    base = node_base(words, cfg, nw)
    pos = lower_bound(words, s0, n, base, cap, key)
    if pos < n and words[s0 + 2 * phys(base, pos, cap)] == key:
        return ST_DUP
    for j in range(n):
        if words[s0 + 2 * phys(base, j, cap) + 1] == ptr:
            return ST_BADPTR
    size = plan_size(cap)
    ek = np.empty(size, np.int64)
    ew = np.empty(size, np.int64)
    ev = np.empty(size, np.uint64)
    left = False
    if cfg[C_KIND] == CIRCULAR:
        left = circ_insert_left(n, pos)
        m = plan_circ_insert(words, nw, n, pos, key, ptr, cap, ek, ew, ev)
    else:
        m = plan_linear_insert(words, nw, n, pos, key, ptr, cap, ek, ew, ev)
    apply_events(words, counters, cfg, ek, ew, ev, m)
    counts[idx] = n + 1
    _post_sync(words, counts, sents, fps, cfg, nw, idx, pos, n, True, left)
    return ST_OK


@jit
def leaf_delete_locked(words, counts, sents, fps, counters, cfg, nw, idx, key):
    n = counts[idx]
    cap = cfg[C_CAP]
    s0 = nw + HDR_WORDS
    base = node_base(words, cfg, nw)
    pos = lower_bound(words, s0, n, base, cap, key)
    if pos >= n or words[s0 + 2 * phys(base, pos, cap)] != key:
        return ST_MISSING
    size = plan_size(cap)
    ek = np.empty(size, np.int64)
    ew = np.empty(size, np.int64)
    ev = np.empty(size, np.uint64)
    left = False
    if cfg[C_KIND] == CIRCULAR:
        left = circ_delete_left(n, pos)
        m = plan_circ_delete(words, nw, n, pos, cap, ek, ew, ev)
    else:
        m = plan_linear_delete(words, nw, n, pos, cap, ek, ew, ev)
    apply_events(words, counters, cfg, ek, ew, ev, m)
    counts[idx] = n - 1
    _post_sync(words, counts, sents, fps, cfg, nw, idx, pos, n, False, left)
    return ST_OK


@jit
def leaf_update_locked(words, counts, sents, fps, counters, cfg, nw, idx, key, ptr):
    p = leaf_find(words, counts, sents, fps, cfg, nw, idx, key)
    if p < 0:
        return ST_MISSING
    n = counts[idx]
    cap = cfg[C_CAP]
    s0 = nw + HDR_WORDS
    base = node_base(words, cfg, nw)
    for i in range(n):
        q = phys(base, i, cap)
        if q != p and words[s0 + 2 * q + 1] == ptr:
            return ST_BADPTR
    ek = np.empty(4, np.int64)
    ew = np.empty(4, np.int64)
    ev = np.empty(4, np.uint64)
    m = plan_update(words, nw, p, ptr, ek, ew, ev)
    apply_events(words, counters, cfg, ek, ew, ev, m)
    return ST_OK


@jit
def try_insert(words, counts, sents, fps, locks, counters, cfg, key, ptr):
    nw, idx = descend_leaf_exclusive(words, counts, locks, cfg, key)
    st = leaf_insert_locked(words, counts, sents, fps, counters, cfg, nw, idx, key, ptr)
    if cfg[C_LOCKING] != 0:
        unlock_exclusive(locks, idx + 1)
    return st


@jit
def try_delete(words, counts, sents, fps, locks, counters, cfg, key):
    nw, idx = descend_leaf_exclusive(words, counts, locks, cfg, key)
    st = leaf_delete_locked(words, counts, sents, fps, counters, cfg, nw, idx, key)
    if cfg[C_LOCKING] != 0:
        unlock_exclusive(locks, idx + 1)
    return st


@jit
def try_update(words, counts, sents, fps, locks, counters, cfg, key, ptr):
    nw, idx = descend_leaf_exclusive(words, counts, locks, cfg, key)
    st = leaf_update_locked(words, counts, sents, fps, counters, cfg, nw, idx, key, ptr)
    if cfg[C_LOCKING] != 0:
        unlock_exclusive(locks, idx + 1)
    return st


# ---------------------------------------------------------------- bench loops

@jit
def bench_ops(words, counts, sents, fps, locks, counters, cfg, kinds, keys, refs,
              start, out_vals, out_status, out_cycles):
    """Run ops from ``start`` timing each one in cycles.

    Stops early and returns the index of an op that did not complete
    (status FULL, DUP or BADPTR), otherwise returns ``len(keys)``.
    """
    for i in range(start, keys.shape[0]):
        k = kinds[i]
        st = ST_OK
        t0 = rdtsc()
        if k == OP_SEARCH:
            out_vals[i] = search_one(words, counts, sents, fps, locks, cfg, keys[i])
        elif k == OP_UPDATE:
            st = try_update(words, counts, sents, fps, locks, counters, cfg, keys[i], refs[i])
        elif k == OP_INSERT:
            st = try_insert(words, counts, sents, fps, locks, counters, cfg, keys[i], refs[i])
        else:
            st = try_delete(words, counts, sents, fps, locks, counters, cfg, keys[i])
        t1 = rdtsc()
        out_cycles[i] = t1 - t0
        out_status[i] = st
        if st == ST_FULL or st == ST_DUP or st == ST_BADPTR:
            return i
    return keys.shape[0]
