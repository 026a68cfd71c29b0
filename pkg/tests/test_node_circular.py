import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import make_leaf, ptr_of
from sentinel_btree import node_circular as NC
from sentinel_btree import node_linear as NL
from sentinel_btree.errors import CorruptionError, KeyNotFoundError, NodeFullError
from sentinel_btree.layout import H_BASECOUNT, NIL, pack_basecount
from sentinel_btree.metrics import AccessTrace, touched_lines
from sentinel_btree.tree import BPlusTree


def with_base(keys, base, node_size=128):
    """Circular leaf with an explicit base, written directly."""
    tree, leaf = make_leaf("circular", node_size)
    h = tree.heap
    for i, k in enumerate(keys):
        off = h.geom.slot_offset(leaf, (base + i) % h.cap)
        tree.region.store_word(off, k)
        tree.region.store_word(off + 8, ptr_of(k))
    tree.region.store_word(leaf + H_BASECOUNT * 8, pack_basecount(base, len(keys)))
    NC.recover(h, leaf)
    return tree, leaf


def test_logical_index_examples():
    tree, leaf = with_base([], 6)
    assert NC.logical_index(tree.heap, leaf, 3) == 1
    tree, leaf = with_base([], 7)
    assert NC.logical_index(tree.heap, leaf, 0) == 7
    tree, leaf = with_base([], 0)
    assert [NC.logical_index(tree.heap, leaf, i) for i in range(8)] == list(range(8))
    with pytest.raises(IndexError):
        NC.logical_index(tree.heap, leaf, 8)


def test_head_insert_moves_base_without_shifting():
    tree, leaf = with_base([20, 30, 40, 50], 2)
    assert NC.circ_insert(tree.heap, leaf, 10, 1) == "left"
    assert tree.heap.base(leaf) == 1
    assert NC.shift_count(4, 0, "left") == 0
    assert NL.keys(tree.heap, leaf) == [10, 20, 30, 40, 50]


def test_tail_insert_appends_right():
    tree, leaf = with_base([20, 30, 40, 50], 2)
    assert NC.circ_insert(tree.heap, leaf, 55, 1) == "right"
    assert tree.heap.base(leaf) == 2
    assert NC.shift_count(4, 4, "right") == 0


def test_insert_picks_cheaper_left_side():
    tree, leaf = with_base([10, 20, 30, 40, 50], 3)
    assert NC.circ_insert(tree.heap, leaf, 25, 1) == "left"
    assert NC.shift_count(5, 2, "left") == 2 < NC.shift_count(5, 2, "right")
    assert NL.keys(tree.heap, leaf) == [10, 20, 25, 30, 40, 50]


def test_delete_head_and_tail():
    tree, leaf = with_base([10, 20, 30], 5)
    assert NC.circ_delete(tree.heap, leaf, 10) == "left"
    assert tree.heap.base(leaf) == 6
    s = tree.heap.geom.slot_offset(leaf, NC.logical_index(tree.heap, leaf, 1))
    assert NC.circ_delete(tree.heap, leaf, 30) == "right"
    assert tree.heap.load(s + 8) == NIL
    assert NL.keys(tree.heap, leaf) == [20]


def test_delete_middle_tie_goes_left():
    tree, leaf = with_base([10, 20, 30, 40, 50], 0)
    assert NC.delete_side(5, 2) == "left"
    assert NC.circ_delete(tree.heap, leaf, 30) == "left"
    assert NL.keys(tree.heap, leaf) == [10, 20, 40, 50]


@pytest.mark.parametrize("cap", range(1, 17))
def test_chosen_side_never_costs_more(cap):
    for n in range(cap):
        for p in range(n + 1):
            side = NC.insert_side(n, p)
            other = "right" if side == "left" else "left"
            assert NC.shift_count(n, p, side) <= NC.shift_count(n, p, other)
    for n in range(1, cap + 1):
        for p in range(n):
            side = NC.delete_side(n, p)
            other = "right" if side == "left" else "left"
            assert NC.shift_count(n, p, side, False) <= NC.shift_count(n, p, other, False)


def test_search_examples():
    for base in range(8):
        tree, leaf = with_base([10, 20, 30], base)
        assert NC.circ_search(tree.heap, leaf, 20) == ptr_of(20)
        tr = AccessTrace()
        assert NC.circ_search(tree.heap, leaf, 5, tr) is None
        assert len(tr.touched) == 2  # a single 16-byte slot read


def test_wrapped_search_counts_physical_lines():
    keys = [10 * (i + 1) for i in range(32)]
    tree, leaf = with_base(keys, 30, node_size=512)
    tr = AccessTrace()
    assert NC.circ_search(tree.heap, leaf, keys[5], tr) == ptr_of(keys[5])
    phys = {(30 + j) % 32 // 4 for j in range(6)}
    assert touched_lines(tr) == len(phys) == 2


def test_full_and_missing():
    tree, leaf = with_base(list(range(1, 9)), 3)
    with pytest.raises(NodeFullError):
        NC.circ_insert(tree.heap, leaf, 100, 1)
    with pytest.raises(KeyNotFoundError):
        NC.circ_delete(tree.heap, leaf, 100)


ops = st.lists(st.tuples(st.booleans(), st.integers(0, 40)), max_size=60)


@given(st.integers(0, 7), ops, st.integers(0, 41))
def test_model_equivalence(base, script, probe):
    tree, leaf = with_base([], base)
    model = set()
    for is_insert, k in script:
        if is_insert and k not in model and len(model) < 8:
            NC.circ_insert(tree.heap, leaf, k, ptr_of(k))
            model.add(k)
        elif not is_insert and k in model:
            NC.circ_delete(tree.heap, leaf, k)
            model.discard(k)
        h = tree.heap
        assert 0 <= h.base(leaf) < h.cap
        assert NL.keys(h, leaf) == sorted(model)
    assert NC.circ_search(tree.heap, leaf, probe) == (ptr_of(probe) if probe in model else None)


def test_recover_rejects_out_of_range_base():
    tree, leaf = with_base([1, 2], 0)
    tree.region.store_word(leaf + H_BASECOUNT * 8, pack_basecount(9, 2))
    with pytest.raises(CorruptionError):
        NC.recover(tree.heap, leaf)


@pytest.mark.parametrize("op", ["insert", "delete"])
@given(st.integers(0, 7), st.sets(st.integers(1, 60), min_size=1, max_size=7),
       st.integers(1, 60))
def test_every_crash_image_recovers_to_pre_or_post(op, base, keys, other):
    keys = sorted(keys)
    if op == "insert" and other in keys:
        return
    target = other if op == "insert" else keys[other % len(keys)]
    tree, leaf = with_base(keys, base)
    img = tree.region.snapshot(tracking=True)
    tree = BPlusTree.recover(img)
    leaf = tree.head
    pre = NL.entries(tree.heap, leaf)
    images = []

    def hook(region):
        images.extend(region.crash_image(p) for p in region.iter_crash_plans())

    tree.region.crash_hook = hook
    if op == "insert":
        NC.circ_insert(tree.heap, leaf, target, ptr_of(target))
    else:
        NC.circ_delete(tree.heap, leaf, target)
    tree.region.crash_hook = None
    post = NL.entries(tree.heap, leaf)
    for im in images:
        rec = BPlusTree.recover(im)
        assert NL.entries(rec.heap, rec.head) in (pre, post)
