"""Exhaustive crash exploration for single tree operations.

A hook on the tracked region fires after every store, flush and fence.  At
each point every ordering-consistent crash plan is materialised (identical
images are recovered once), the tree is recovered from the image, and the
recovered contents must equal the state before or after the operation.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field

from .accel import fingerprint_build, fingerprint_of, sentinel_build, sentinel_of
from .errors import TreeError
from .nvm_sim import PersistentRegion, image_region
from .tree import BPlusTree


@dataclass
class CrashReport:
    node_kind: str
    accel: str
    node_size: int
    ops: int = 0
    crash_points: int = 0
    plans: int = 0
    images: int = 0
    truncated_points: int = 0
    failures: list[str] = field(default_factory=list)

    @property
    def passed(self) -> int:
        return self.images - len(self.failures)

    @property
    def ok(self) -> bool:
        return not self.failures and self.truncated_points == 0


class CrashExplorer:
    def __init__(self, tree: BPlusTree, *, plan_cap: int | None = 200_000):
        if not tree.region.tracking:
            raise ValueError("crash exploration needs a tracked region")
        self.tree = tree
        self.plan_cap = plan_cap
        self._images: dict = {}
        self._points = 0
        self._plans = 0
        self._truncated = 0

    def _hook(self, region: PersistentRegion) -> None:
        self._points += 1
        base = region.persisted_image
        bh = hash(base)
        n = 0
        for plan in region.iter_crash_plans():
            n += 1
            if self.plan_cap is not None and n > self.plan_cap:
                self._truncated += 1
                break
            writes = region.plan_writes(plan, check=False)
            key = (bh, frozenset(writes.items()))
            if key not in self._images:
                self._images[key] = (base, writes)
        self._plans += n

    def run_op(self, fn, *args) -> tuple[dict, dict, list]:
        """Run one operation under the hook; returns (pre, post, images)."""
        pre = self.tree.state()
        self._images = {}
        region = self.tree.region
        region.crash_hook = self._hook
        try:
            fn(*args)
        finally:
            region.crash_hook = None
        post = self.tree.state()
        return pre, post, list(self._images.values())

    def verify(self, pre: dict, post: dict, images: list) -> list[str]:
        failures = []
        region = self.tree.region
        for base, writes in images:
            img = image_region(region, base, writes)
            try:
                rec = BPlusTree.recover(img, accel=self.tree.accel)
                got = rec.state()
            except TreeError as e:
                failures.append(f"recovery raised {type(e).__name__}: {e}")
                continue
            bad = stale_accelerators(rec)
            if bad:
                failures.append(f"rebuilt accelerator differs from a fresh build at leaves {bad}")
            if got != pre and got != post:
                extra = sorted(set(got.items()) ^ set(post.items()))[:4]
                failures.append(f"recovered state is neither pre nor post (diff vs post {extra})")
        return failures


def stale_accelerators(tree: BPlusTree) -> list[int]:
    """Leaves whose maintained sentinel/fingerprint array differs from a fresh build."""
    heap = tree.heap
    bad = []
    for leaf in tree.leaves():
        if tree.accel == "sentinel" and sentinel_of(heap, leaf) != sentinel_build(heap, leaf):
            bad.append(leaf)
        elif tree.accel == "fingerprint" and fingerprint_of(heap, leaf) != fingerprint_build(heap, leaf):
            bad.append(leaf)
    return bad


def run_crashtest(node_kind: str = "linear", accel: str = "sentinel", *, node_size: int = 128,
                  ops: int = 200, seed: int = 0, key_space: int | None = None,
                  region_size: int = 1 << 16, plan_cap: int | None = 200_000,
                  progress=None) -> CrashReport:
    """Random insert/delete/update sequence with every step crash-explored."""
    tree = BPlusTree(node_kind, node_size, accel, tracking=True, region_size=region_size)
    ex = CrashExplorer(tree, plan_cap=plan_cap)
    rep = CrashReport(node_kind, accel, node_size)
    rng = random.Random(seed)
    key_space = key_space or max(64, ops)
    live: dict[int, int] = {}
    next_ref = 1
    for i in range(ops):
        r = rng.random()
        if live and r < 0.25:
            k = rng.choice(sorted(live))
            pre, post, imgs = ex.run_op(tree.delete, k)
            del live[k]
        elif live and r < 0.35:
            k = rng.choice(sorted(live))
            pre, post, imgs = ex.run_op(tree.update, k, next_ref)
            live[k] = next_ref
            next_ref += 1
        else:
            k = rng.randrange(key_space)
            while k in live:
                k = rng.randrange(key_space)
            pre, post, imgs = ex.run_op(tree.insert, k, next_ref)
            live[k] = next_ref
            next_ref += 1
        if post != live:
            rep.failures.append(f"op {i}: live tree diverged from the model")
        rep.images += len(imgs)
        rep.failures.extend(f"op {i}: {f}" for f in ex.verify(pre, post, imgs))
        rep.ops += 1
        if progress is not None:
            progress(i, rep)
    rep.crash_points = ex._points
    rep.plans = ex._plans
    rep.truncated_points = ex._truncated
    return rep
