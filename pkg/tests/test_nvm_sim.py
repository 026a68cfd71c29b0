import itertools

import pytest
from hypothesis import given
from hypothesis import strategies as st

from sentinel_btree.nvm_sim import (AlignmentError, CrashPlan, CrashPlanError, NVMError,
                                    PersistentRegion, RangeError)

LINE = 64


def region(size=512, **kw):
    return PersistentRegion(size, tracking=True, **kw)


# ---------------------------------------------------------------- oracle

def oracle_plans(log):
    """Brute-force crash states from a whole store/flush/fence log.

    ``log`` is a list of ("store", word, value) / ("flush", line) / ("fence",).
    Returns (durable store indices, set of frozensets of optional stores).
    """
    stores = [(i, e[1], e[2]) for i, e in enumerate(log) if e[0] == "store"]

    def line(w):
        return w * 8 // LINE

    def before(a, b):
        ia, wa, _ = a
        ib, wb, _ = b
        if ia >= ib:
            return False
        if line(wa) == line(wb):
            return True
        for e in log[ia + 1:ib]:
            if e[0] == "fence" or (e[0] == "flush" and e[1] == line(wa)):
                return True
        return False

    durable = set()
    for s in stores:
        flushed = None
        for j in range(s[0] + 1, len(log)):
            e = log[j]
            if e[0] == "flush" and e[1] == line(s[1]):
                flushed = j
            if e[0] == "fence" and flushed is not None:
                durable.add(s[0])
                break
    changed = True
    while changed:
        changed = False
        for a in stores:
            for b in stores:
                if b[0] in durable and a[0] not in durable and before(a, b):
                    durable.add(a[0])
                    changed = True
    optional = [s for s in stores if s[0] not in durable]
    plans = set()
    for r in range(len(optional) + 1):
        for sub in itertools.combinations(optional, r):
            chosen = {s[0] for s in sub}
            if all(a[0] in chosen for b in sub for a in optional if before(a, b)):
                plans.add(frozenset(chosen))
    return durable, plans


def image_from(log, chosen, size):
    img = bytearray(size)
    for i, e in enumerate(log):
        if e[0] == "store" and i in chosen:
            img[e[1] * 8:e[1] * 8 + 8] = e[2].to_bytes(8, "little")
    return bytes(img)


def replay(log, size=512):
    r = region(size)
    for e in log:
        if e[0] == "store":
            r.store_word(e[1] * 8, e[2])
        elif e[0] == "flush":
            r.flush_line(e[1] * LINE)
        else:
            r.fence()
    return r


events = st.lists(
    st.one_of(
        st.tuples(st.just("store"), st.integers(0, 23), st.integers(1, 2**64 - 1)),
        st.tuples(st.just("flush"), st.integers(0, 2)),
        st.tuples(st.just("fence")),
    ),
    max_size=9,
)


@given(events)
def test_crash_images_match_brute_force_oracle(log):
    r = replay(log)
    durable, plans = oracle_plans(log)
    expect = {image_from(log, durable | p, 512) for p in plans}
    got = {bytes(r.crash_image(p).buf) for p in r.enumerate_crash_plans()}
    assert got == expect


@given(events)
def test_durable_words_match_oracle(log):
    r = replay(log)
    durable, _ = oracle_plans(log)
    assert r.persisted_image == image_from(log, durable, 512)


@given(events)
def test_counters_count_calls_exactly(log):
    r = replay(log)
    c = r.counters
    assert c.flushes == sum(e[0] == "flush" for e in log)
    assert c.fences == sum(e[0] == "fence" for e in log)
    assert c.injected_delay_ns == c.flushes * r.write_latency_ns


@given(events)
def test_persisted_image_differs_only_at_dirty_words(log):
    r = replay(log)
    dirty = r.dirty_words
    img = r.persisted_image
    for off in range(0, 512, 8):
        if img[off:off + 8] != bytes(r.buf[off:off + 8]):
            assert off in dirty


# -------------------------------------------------------------- examples

def test_store_then_load():
    r = region()
    r.store_word(0, 0x2A)
    assert r.load_word(0) == 0x2A


def test_unflushed_store_lost_in_empty_plan():
    r = region()
    r.store_word(0, 7)
    empty = CrashPlan(frozenset(), frozenset())
    assert r.crash_image(empty).load_word(0) == 0
    assert r.persisted_image[:8] == bytes(8)


def test_flushed_and_fenced_store_always_durable():
    r = region()
    r.store_word(0, 7)
    r.flush_line(0)
    r.fence()
    assert r.dirty_words == set()
    for p in r.enumerate_crash_plans():
        assert r.crash_image(p).load_word(0) == 7


def test_flush_of_clean_line_still_costs():
    r = region()
    r.flush_line(128)
    assert r.counters.flushes == 1
    assert r.counters.injected_delay_ns == 300


def test_default_write_latency_is_300ns():
    r = PersistentRegion(128)
    r.flush_line(0)
    assert r.counters.injected_delay_ns == 300


def test_fence_without_flush_only_counts():
    r = region()
    r.store_word(8, 1)
    r.fence()
    assert r.counters.fences == 1
    assert r.dirty_words == {8}


def test_fenced_store_survives_every_plan_later_store_optional():
    r = region()
    r.store_word(0, 1)
    r.flush_line(0)
    r.fence()
    r.store_word(64, 2)
    images = [r.crash_image(p) for p in r.enumerate_crash_plans()]
    assert all(img.load_word(0) == 1 for img in images)
    assert {img.load_word(64) for img in images} == {0, 2}


def test_double_fence_idempotent():
    r = region()
    r.store_word(0, 1)
    r.flush_line(0)
    r.fence()
    before = (r.persisted_image, r.dirty_words)
    r.fence()
    assert (r.persisted_image, r.dirty_words) == before


def test_clean_region_single_empty_plan():
    r = region()
    plans = r.enumerate_crash_plans()
    assert len(plans) == 1 and not plans[0].persisted_subset
    assert bytes(r.crash_image(plans[0]).buf) == bytes(r.buf)


def test_three_independent_words_give_power_set():
    r = region(256)
    for line in range(3):
        r.store_word(line * 64, line + 1)
    assert len(r.enumerate_crash_plans()) == 8


def test_fence_ordered_pair_gives_three_plans():
    r = region(256)
    r.store_word(0, 1)
    r.fence()
    r.store_word(64, 2)
    plans = r.enumerate_crash_plans()
    assert len(plans) == 3
    assert {p.persisted_subset for p in plans} == {frozenset(), frozenset({0}),
                                                   frozenset({0, 64})}


def test_full_plan_image_equals_volatile_bytes():
    r = region()
    r.store_word(0, 5)
    r.store_word(200, 6)
    assert bytes(r.crash_image(r.full_plan()).buf) == bytes(r.buf)


def test_plan_cap_truncates():
    r = region(512)
    for line in range(5):
        r.store_word(line * 64, 1)
    assert len(r.enumerate_crash_plans(cap=4)) == 4


def test_inconsistent_plan_rejected():
    r = region(256)
    r.store_word(0, 1)
    r.fence()
    r.store_word(64, 2)
    late = [p for p in r.enumerate_crash_plans() if 64 in p.persisted_subset][0]
    bad = CrashPlan(late.stores - {min(late.stores)}, frozenset({64}))
    with pytest.raises(CrashPlanError):
        r.crash_image(bad)


@pytest.mark.parametrize("off", [3, 12, -8, 512])
def test_misaligned_or_out_of_range_store(off):
    with pytest.raises(AlignmentError):
        region().store_word(off, 1)


def test_flush_out_of_range():
    with pytest.raises(RangeError):
        region().flush_line(4096)


def test_untracked_region_refuses_crash_queries():
    r = PersistentRegion(128)
    r.store_word(0, 1)
    with pytest.raises(NVMError):
        r.enumerate_crash_plans()


def test_same_line_stores_persist_in_order():
    r = region()
    r.store_word(0, 1)
    r.store_word(8, 2)
    subsets = {p.persisted_subset for p in r.enumerate_crash_plans()}
    assert frozenset({8}) not in subsets
    assert len(subsets) == 3
