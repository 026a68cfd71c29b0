import pytest
from hypothesis import HealthCheck, settings

from sentinel_btree import node_circular as NC
from sentinel_btree import node_linear as NL
from sentinel_btree.tree import BPlusTree

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def make_leaf(kind="linear", node_size=512, accel="none", keys=(), *, tracking=False,
              search="linear"):
    """A tree whose root leaf is filled directly (no splits); returns (tree, leaf)."""
    tree = BPlusTree(kind, node_size, accel, search, region_size=1 << 16, tracking=tracking)
    leaf = tree.root
    ins = NC.circ_insert if kind == "circular" else NL.leaf_insert
    for k in keys:
        ins(tree.heap, leaf, k, ptr_of(k))
    return tree, leaf


def ptr_of(key: int) -> int:
    return key + 1_000_000


@pytest.fixture
def leaf_factory():
    return make_leaf


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
