import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import make_leaf, ptr_of
from sentinel_btree import node_linear as NL
from sentinel_btree.errors import (BadPointerError, DuplicateKeyError, KeyNotFoundError,
                                   NodeFullError)
from sentinel_btree.layout import HDR_WORDS, NIL
from sentinel_btree.metrics import AccessTrace, touched_lines
from sentinel_btree.tree import BPlusTree


def counters_of(tree):
    c = tree.region.counters
    return c.flushes, c.fences


def test_insert_keeps_sorted_order():
    tree, leaf = make_leaf(keys=[10, 20, 40])
    NL.leaf_insert(tree.heap, leaf, 30, ptr_of(30))
    assert NL.keys(tree.heap, leaf) == [10, 20, 30, 40]


def test_append_in_same_line_costs_one_flush_one_fence():
    tree, leaf = make_leaf(keys=[10, 20])
    tree.region.reset_counters()
    NL.leaf_insert(tree.heap, leaf, 30, 1)
    assert counters_of(tree) == (1, 1)


def test_head_insert_into_31_of_32_costs_8_flushes():
    tree, leaf = make_leaf(node_size=512, keys=[10 * (i + 1) for i in range(31)])
    assert tree.capacity == 32
    tree.region.reset_counters()
    NL.leaf_insert(tree.heap, leaf, 1, 1)
    assert counters_of(tree) == (8, 1)


@given(st.integers(0, 31).flatmap(lambda n: st.tuples(st.just(n), st.integers(0, n))))
def test_insert_flush_economy(np_):
    n, pos = np_
    keys = [10 * (i + 1) for i in range(n)]
    tree, leaf = make_leaf(node_size=512, keys=keys)
    tree.region.reset_counters()
    new = 10 * pos + 5
    NL.leaf_insert(tree.heap, leaf, new, 1)
    flushes, fences = counters_of(tree)
    shifted = (n - pos) * 16
    assert fences == 1
    assert flushes <= math.ceil(shifted / 64) + 1
    assert NL.keys(tree.heap, leaf) == sorted(keys + [new])


def test_delete_middle():
    tree, leaf = make_leaf(keys=[10, 20, 30])
    NL.leaf_delete(tree.heap, leaf, 20)
    assert NL.keys(tree.heap, leaf) == [10, 30]


def test_delete_last_only_nils_its_ptr():
    tree, leaf = make_leaf(keys=[10, 20, 30])
    before = bytes(tree.region.buf)
    tree.region.reset_counters()
    NL.leaf_delete(tree.heap, leaf, 30)
    after = bytes(tree.region.buf)
    changed = [i for i in range(0, len(before), 8) if before[i:i + 8] != after[i:i + 8]]
    assert changed == [tree.heap.geom.slot_offset(leaf, 2) + 8]
    assert counters_of(tree) == (1, 1)


def test_delete_singleton_leaves_empty_node():
    tree, leaf = make_leaf(keys=[10])
    NL.leaf_delete(tree.heap, leaf, 10)
    assert tree.heap.count(leaf) == 0
    assert NL.leaf_search_linear(tree.heap, leaf, 10) is None


def test_update_is_one_flush_one_fence():
    tree, leaf = make_leaf(keys=[10, 20, 30])
    tree.region.reset_counters()
    NL.leaf_update(tree.heap, leaf, 20, 99)
    assert counters_of(tree) == (1, 1)
    assert NL.leaf_search_linear(tree.heap, leaf, 20) == 99


def test_errors():
    tree, leaf = make_leaf(node_size=128, keys=range(1, 9))
    with pytest.raises(NodeFullError):
        NL.leaf_insert(tree.heap, leaf, 100, 1)
    tree, leaf = make_leaf(keys=[10])
    with pytest.raises(DuplicateKeyError):
        NL.leaf_insert(tree.heap, leaf, 10, 5)
    with pytest.raises(BadPointerError):
        NL.leaf_insert(tree.heap, leaf, 11, ptr_of(10))
    with pytest.raises(BadPointerError):
        NL.leaf_insert(tree.heap, leaf, 11, NIL)
    with pytest.raises(KeyNotFoundError):
        NL.leaf_delete(tree.heap, leaf, 11)
    with pytest.raises(KeyNotFoundError):
        NL.leaf_update(tree.heap, leaf, 11, 3)
    with pytest.raises(ValueError):
        NL.leaf_insert(tree.heap, leaf, 2**64 - 1, 3)


def test_linear_search_examples():
    tree, leaf = make_leaf(keys=[10, 20, 30])
    assert NL.leaf_search_linear(tree.heap, leaf, 20) == ptr_of(20)
    tr = AccessTrace()
    assert NL.leaf_search_linear(tree.heap, leaf, 25, tr) is None
    assert touched_lines(tr) == 1


def test_full_4kb_key_at_slot_9_touches_3_lines():
    tree, leaf = make_leaf(node_size=4096, keys=[10 * (i + 1) for i in range(256)])
    tr = AccessTrace()
    NL.leaf_search_linear(tree.heap, leaf, 100, tr)
    assert touched_lines(tr) == 3


def test_every_slot_touches_floor_j_over_4_plus_1_lines():
    tree, leaf = make_leaf(node_size=4096, keys=[10 * (i + 1) for i in range(256)])
    for j in range(256):
        tr = AccessTrace()
        NL.leaf_search_linear(tree.heap, leaf, 10 * (j + 1), tr)
        assert touched_lines(tr) == j // 4 + 1


def test_binary_probes_bounded_by_log2():
    tree, leaf = make_leaf(node_size=4096, keys=[10 * (i + 1) for i in range(256)])
    for key in range(0, 2600, 7):
        tr = AccessTrace()
        NL.leaf_search_binary(tree.heap, leaf, key, tr)
        key_reads = {o for o in tr.touched if (o - leaf) % 16 == 0}
        assert len(key_reads) <= 9  # 8 halvings plus the final empty-range probe


@given(st.sets(st.integers(0, 500), max_size=31), st.integers(0, 510))
def test_binary_equals_linear(keys, probe):
    tree, leaf = make_leaf(node_size=512, keys=sorted(keys))
    assert (NL.leaf_search_binary(tree.heap, leaf, probe)
            == NL.leaf_search_linear(tree.heap, leaf, probe)
            == (ptr_of(probe) if probe in keys else None))


def test_linear_search_skips_transient_duplicate_ptr():
    tree, leaf = make_leaf(keys=[10, 20, 30])
    w = tree.region
    s = tree.heap.geom.slot_offset(leaf, 3)
    w.store_word(s + 8, ptr_of(30))  # right shift copied ptr, key not yet
    assert NL.leaf_search_linear(tree.heap, leaf, 30) == ptr_of(30)
    assert NL.leaf_search_linear(tree.heap, leaf, 35) is None


def test_split_of_full_8_slot_node():
    keys = [10 * (i + 1) for i in range(8)]
    tree, leaf = make_leaf(node_size=128, keys=keys)
    new, sep = NL.leaf_split(tree.heap, leaf)
    assert sep == keys[4]
    assert NL.keys(tree.heap, leaf) == keys[:4]
    assert NL.keys(tree.heap, new) == keys[4:]
    assert tree.heap.load(leaf) == new


def test_recover_collapses_interrupted_shift():
    tree, leaf = make_leaf(node_size=128, keys=[10, 20, 30])
    s3 = tree.heap.geom.slot_offset(leaf, 3)
    tree.region.store_word(s3 + 8, ptr_of(30))
    tree.heap.counts[tree.heap.idx(leaf)] = 99  # volatile count is not trusted
    assert NL.leaf_recover(tree.heap, leaf) == 3
    assert NL.entries(tree.heap, leaf) == [(10, ptr_of(10)), (20, ptr_of(20)), (30, ptr_of(30))]
    assert tree.heap.load(s3 + 8) == NIL


def test_recover_clean_and_empty_nodes():
    tree, leaf = make_leaf(keys=[10, 20])
    before = bytes(tree.region.buf)
    assert NL.leaf_recover(tree.heap, leaf) == 2
    assert bytes(tree.region.buf) == before
    tree, leaf = make_leaf()
    assert NL.leaf_recover(tree.heap, leaf) == 0


def _images_during(tree, fn):
    images = []

    def hook(region):
        for plan in region.iter_crash_plans():
            images.append(region.crash_image(plan))

    tree.region.crash_hook = hook
    try:
        fn()
    finally:
        tree.region.crash_hook = None
    return images


def test_mid_shift_crash_exposes_duplicate_ptr_in_some_plan():
    tree, leaf = make_leaf(node_size=64, keys=[20, 30, 40], tracking=True)
    images = _images_during(tree, lambda: NL.leaf_insert(tree.heap, leaf, 10, 1))
    s0 = (leaf >> 3) + HDR_WORDS

    def adjacent_dup(img):
        ptrs = [img.words[s0 + 2 * i + 1] for i in range(4)]
        return any(a == b != NIL for a, b in zip(ptrs, ptrs[1:]))

    assert any(adjacent_dup(img) for img in images)


@pytest.mark.parametrize("op", ["insert", "delete"])
@given(st.sets(st.integers(1, 60), min_size=1, max_size=7), st.integers(1, 60))
def test_every_crash_image_recovers_to_pre_or_post(op, keys, other):
    keys = sorted(keys)
    if op == "insert" and other in keys:
        return
    target = other if op == "insert" else keys[other % len(keys)]
    tree, leaf = make_leaf(node_size=128, keys=keys, tracking=True)
    pre = NL.entries(tree.heap, leaf)
    fn = ((lambda: NL.leaf_insert(tree.heap, leaf, target, ptr_of(target))) if op == "insert"
          else (lambda: NL.leaf_delete(tree.heap, leaf, target)))
    images = _images_during(tree, fn)
    post = NL.entries(tree.heap, leaf)
    for img in images:
        rec = BPlusTree.recover(img)
        assert NL.entries(rec.heap, rec.head) in (pre, post)
