"""Predictive Buffer Management.

Every resident page sits in one bucket of a timeline ordered by the estimated
time until some registered scan consumes it. Buckets come in ``n_groups``
groups of ``m``; group ``g`` buckets span ``time_slice * 2**g``. Every
``time_slice`` the timeline shifts left and the bucket falling off the front
is drained by re-estimating its pages. Victims come from the not-requested
bucket first (LRU order), then from the farthest requested bucket downward.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from ..storage import TupleRange
from .base import Policy

NS_PER_S = 1_000_000_000


class PBMError(RuntimeError):
    pass


class PageMeta:
    __slots__ = ("page", "consuming", "bucket", "prev", "next", "resident")

    def __init__(self, page):
        self.page = page
        self.consuming: list[list] = []  # [scan_id, tuples_behind]
        self.bucket: Bucket | None = None
        self.prev: PageMeta | None = None
        self.next: PageMeta | None = None
        self.resident = False


class Bucket:
    """Intrusive doubly-linked list of PageMeta nodes."""

    __slots__ = ("head", "tail", "size", "length")

    def __init__(self, length: int = 0):
        self.head: PageMeta | None = None
        self.tail: PageMeta | None = None
        self.size = 0
        self.length = length

    def __len__(self):
        return self.size

    def __iter__(self):
        node = self.head
        while node is not None:
            nxt = node.next
            yield node
            node = nxt


@dataclass
class ScanInfo:
    scan_id: int
    columns: tuple
    speed: float
    tuples_consumed: dict = field(default_factory=dict)
    reported_at: dict = field(default_factory=dict)
    speed_time: int = 0
    speed_tuples: int = 0
    samples: int = 0
    plan: dict = field(default_factory=dict)  # column -> [(meta, behind, end)]
    cursor: dict = field(default_factory=dict)
    # estimate for an entry is behind * inv + base[col] - now (ns)
    inv: float = 0.0
    base: dict = field(default_factory=dict)
    drift: dict = field(default_factory=dict)

    def rebase(self) -> None:
        self.inv = NS_PER_S / self.speed
        for col, consumed in self.tuples_consumed.items():
            self.base[col] = self.reported_at[col] - consumed * self.inv


def groups_for_horizon(max_time: float, m: int, time_slice: float) -> int:
    """Smallest group count whose timeline reaches ``max_time``."""
    n = 1
    while m * time_slice * (2 ** n - 1) < max_time:
        n += 1
    return n


class BucketTimeline:
    def __init__(self, n_groups: int = 5, m: int = 10, time_slice: int = 100_000_000):
        if n_groups < 1 or m < 1 or time_slice < 1:
            raise ValueError("n_groups, m and time_slice must be positive")
        self.n_groups = n_groups
        self.m = m
        self.time_slice = time_slice
        self.size = n_groups * m
        self.buckets = [Bucket(self.span(i)) for i in range(self.size)]
        self.not_requested = Bucket()
        self.time_passed = 0  # in slices
        self.shifted_at = 0  # sim time of the last shift; positions are relative to it
        self.touches = 0
        self.ops = 0
        self.max_touches = 0

    def span(self, position: int) -> int:
        return self.time_slice << (position // self.m)

    @property
    def horizon(self) -> int:
        return self.m * self.time_slice * ((1 << self.n_groups) - 1)

    def bucket_number(self, t: float) -> int:
        if t <= 0:
            return 0
        u = int(t // self.time_slice)
        g = (u // self.m + 1).bit_length() - 1
        if g >= self.n_groups:
            return self.size - 1
        idx = (u - self.m * ((1 << g) - 1)) >> g
        return min(g * self.m + idx, self.size - 1)

    def bucket_bounds(self, position: int) -> tuple[int, int]:
        """Canonical time span ``[lo, hi)`` covered by a bucket position."""
        g, idx = divmod(position, self.m)
        lo = self.time_slice * (self.m * ((1 << g) - 1) + (idx << g))
        return lo, lo + self.span(position)

    def position_of(self, bucket: Bucket) -> int | None:
        for i, b in enumerate(self.buckets):
            if b is bucket:
                return i
        return None

    # constant-cost list primitives; ``touches`` counts pointer reads and writes
    def add(self, bucket: Bucket, node: PageMeta) -> None:
        t = 3
        node.bucket = bucket
        node.next = None
        node.prev = bucket.tail
        if bucket.tail is None:
            bucket.head = node
        else:
            bucket.tail.next = node
            t += 1
        bucket.tail = node
        bucket.size += 1
        self._count(t + 2)

    def remove(self, node: PageMeta) -> None:
        bucket = node.bucket
        t = 3
        if node.prev is None:
            bucket.head = node.next
        else:
            node.prev.next = node.next
            t += 1
        if node.next is None:
            bucket.tail = node.prev
        else:
            node.next.prev = node.prev
            t += 1
        node.prev = node.next = node.bucket = None
        bucket.size -= 1
        self._count(t + 3)

    def pop(self, bucket: Bucket) -> PageMeta | None:
        node = bucket.head
        if node is not None:
            self.remove(node)
        return node

    def _count(self, t: int) -> None:
        self.touches += t
        self.ops += 1
        if t > self.max_touches:
            self.max_touches = t

    def shift(self, now: int | None = None) -> Bucket:
        """Advance one slice; returns the bucket that fell off the front."""
        self.time_passed += 1
        self.shifted_at = self.time_passed * self.time_slice if now is None else now
        old = self.buckets
        new: list[Bucket | None] = [None] * self.size
        dropped = None
        for i in range(self.size):
            if self.time_passed % (1 << (i // self.m)) == 0:
                if i == 0:
                    dropped = old[0]
                else:
                    new[i - 1] = old[i]
                    old[i].length = self.span(i - 1)
            else:
                new[i] = old[i]
        for i in range(self.size):
            if new[i] is None:
                new[i] = Bucket(self.span(i))
        self.buckets = new
        return dropped


class PBMPolicy(Policy):
    name = "pbm"

    def __init__(self, n_groups: int = 5, m: int = 10, time_slice: int = 100_000_000,
                 alpha: float = 0.3, speed_floor: float = 1.0, initial_speed: float = 1_000_000.0):
        self.timeline = BucketTimeline(n_groups, m, time_slice)
        self.alpha = alpha
        self.speed_floor = speed_floor
        self.initial_speed = initial_speed
        self.pages: dict = {}
        self.scans: dict[int, ScanInfo] = {}
        self._next_id = 0
        self.refreshes = 0

    @property
    def time_slice(self) -> int:
        return self.timeline.time_slice

    def _meta(self, page) -> PageMeta:
        meta = self.pages.get(page)
        if meta is None:
            meta = self.pages[page] = PageMeta(page)
        return meta

    # -- scan interface -------------------------------------------------
    def register_scan(self, table, columns, range_list, now=0, snapshot=None):
        scan_id = self._next_id
        self._next_id += 1
        columns = tuple(columns)
        info = ScanInfo(scan_id, columns, max(self.initial_speed, self.speed_floor),
                        speed_time=now)
        self.scans[scan_id] = info
        for col in columns:
            info.tuples_consumed[col] = 0
            info.reported_at[col] = now
        info.rebase()
        ranges = [TupleRange(*r) for r in range_list]
        for col in columns:
            info.cursor[col] = 0
            info.drift[col] = 0.0
            plan = info.plan[col] = []
            behind = 0
            tpp = table.column(col).tuples_per_page
            for rng in ranges:
                positions = table.page_positions(col, rng, None if snapshot is None else snapshot.tuple_count)
                pages = table.pages_for_range(col, rng, snapshot)
                for pos, page in zip(positions, pages):
                    span = TupleRange(pos * tpp, (pos + 1) * tpp).intersect(rng)
                    meta = self._meta(page)
                    meta.consuming.append([scan_id, behind])
                    plan.append((meta, behind, behind + len(span)))
                    behind += len(span)
                    if meta.resident:
                        self.page_push(meta, now)
        return scan_id

    def report_scan_position(self, scan_id, column, tuples_consumed, now=0):
        info = self._scan(scan_id)
        cols = info.columns if column is None else (column,)
        old_inv, old_base = info.inv, dict(info.base)
        for col in cols:
            if tuples_consumed < info.tuples_consumed[col]:
                raise PBMError(f"scan {scan_id} position regressed on column {col}")
            info.tuples_consumed[col] = tuples_consumed
            info.reported_at[col] = now
        dt = now - info.speed_time
        if dt > 0:
            observed = (tuples_consumed - info.speed_tuples) * NS_PER_S / dt
            if info.samples == 0:
                speed = observed
            else:
                speed = self.alpha * observed + (1 - self.alpha) * info.speed
            info.speed = max(speed, self.speed_floor)
            info.samples += 1
            info.speed_time = now
            info.speed_tuples = tuples_consumed
        info.rebase()
        # Re-pushing is only needed once estimates may have moved by half a
        # slice since the last re-push; smaller drift stays within one bucket.
        d_inv = info.inv - old_inv
        for col in info.columns:
            plan = info.plan[col]
            if not plan:
                continue
            lo, hi = info.tuples_consumed[col], max(plan[-1][1], info.tuples_consumed[col])
            d_base = info.base[col] - old_base[col]
            info.drift[col] += max(abs(lo * d_inv + d_base), abs(hi * d_inv + d_base))
            full = info.drift[col] >= self.time_slice / 2
            if full:
                info.drift[col] = 0.0
            self._repush_plan(info, col, now, full)

    def _repush_plan(self, info: ScanInfo, col, now, full: bool = True) -> None:
        """Re-push this scan's resident pages from its current position on.

        With ``full`` false only the pages the latest report moved past (but
        not yet released) are re-pushed: their estimate now comes from the
        next consumer.
        """
        plan = info.plan[col]
        consumed = info.tuples_consumed[col]
        i = info.cursor[col]
        while i < len(plan) and plan[i][2] <= consumed:
            i += 1
        info.cursor[col] = i
        for meta, behind, _ in plan[i:]:
            if not full and behind >= consumed:
                break
            if meta.resident:
                self.page_push(meta, now)

    def page_consumed(self, scan_id, page, now=0):
        meta = self.pages.get(page)
        if meta is None:
            return
        mine = [e for e in meta.consuming if e[0] == scan_id]
        if mine:
            meta.consuming.remove(min(mine, key=lambda e: e[1]))
        if meta.resident:
            self.page_push(meta, now)
        elif not meta.consuming:
            del self.pages[page]

    def unregister_scan(self, scan_id, now=0):
        if scan_id not in self.scans:
            raise PBMError(f"unknown scan {scan_id}")
        del self.scans[scan_id]

    def _scan(self, scan_id) -> ScanInfo:
        try:
            return self.scans[scan_id]
        except KeyError:
            raise PBMError(f"unknown scan {scan_id}") from None

    # -- estimates and buckets ------------------------------------------
    def page_next_consumption(self, page, now=0) -> float | None:
        """Nanoseconds until the nearest registered consumer reaches ``page``.

        Each scan's position is extrapolated from its last report at its
        current speed. Entries of finished scans or already passed positions
        are dropped.
        """
        meta = page if isinstance(page, PageMeta) else self.pages.get(page)
        if meta is None:
            return None
        col = meta.page[1]
        scans = self.scans
        nearest = None
        stale = False
        for entry in meta.consuming:
            info = scans.get(entry[0])
            if info is None or entry[1] < info.tuples_consumed[col]:
                stale = True
                continue
            t = entry[1] * info.inv + info.base[col]
            if nearest is None or t < nearest:
                nearest = t
        if stale:
            meta.consuming = [e for e in meta.consuming
                              if e[0] in scans and e[1] >= scans[e[0]].tuples_consumed[col]]
        if nearest is None:
            return None
        t = nearest - now
        return t if t > 0 else 0.0

    def time_to_bucket_number(self, t: float) -> int:
        return self.timeline.bucket_number(t)

    def page_push(self, page, now=0) -> None:
        meta = page if isinstance(page, PageMeta) else self.pages[page]
        tl = self.timeline
        t = self.page_next_consumption(meta, now)
        if t is None:
            target = tl.not_requested
        else:
            # bucket spans count from the last shift, not from now
            target = tl.buckets[tl.bucket_number(t + max(0, now - tl.shifted_at))]
        if meta.bucket is target:
            return
        if meta.bucket is not None:
            tl.remove(meta)
        tl.add(target, meta)

    def refresh_requested_buckets(self, now=0) -> None:
        dropped = self.timeline.shift(now)
        self.refreshes += 1
        node = dropped.head
        while node is not None:
            nxt = node.next
            self.timeline.remove(node)
            self.page_push(node, now)
            node = nxt

    # -- pool callbacks -------------------------------------------------
    def on_loaded(self, page, now=0):
        meta = self._meta(page)
        meta.resident = True
        self.page_push(meta, now)

    def on_access(self, page, now=0):
        meta = self.pages[page]
        if meta.bucket is self.timeline.not_requested:
            self.timeline.remove(meta)
            self.timeline.add(self.timeline.not_requested, meta)

    def on_evicted(self, page, now=0):
        meta = self.pages[page]
        if meta.bucket is not None:
            self.timeline.remove(meta)
        meta.resident = False
        if not meta.consuming:
            del self.pages[page]

    def select_victims(self, k, now=0, evictable=None):
        out = []
        if k <= 0:
            return out
        tl = self.timeline
        for bucket in (tl.not_requested, *reversed(tl.buckets)):
            node = bucket.head
            while node is not None:
                if evictable is None or evictable(node.page):
                    out.append(node.page)
                    if len(out) == k:
                        return out
                node = node.next
        return out

    # -- invariant checks -----------------------------------------------
    def check_invariants(self, now=0, slack: int = 1) -> list[str]:
        problems = []
        tl = self.timeline
        position = {id(b): i for i, b in enumerate(tl.buckets)}
        position[id(tl.not_requested)] = math.inf
        seen = set()
        for bucket in (*tl.buckets, tl.not_requested):
            count = 0
            prev = None
            node = bucket.head
            while node is not None:
                if node.bucket is not bucket or node.prev is not prev:
                    problems.append(f"broken link at {node.page}")
                    break
                if node.page in seen:
                    problems.append(f"{node.page} in two buckets")
                seen.add(node.page)
                count += 1
                prev, node = node, node.next
            if count != bucket.size or bucket.tail is not prev:
                problems.append("bucket size/tail mismatch")
        for page, meta in self.pages.items():
            if meta.resident and page not in seen:
                problems.append(f"resident {page} in no bucket")
            if not meta.resident and meta.bucket is not None:
                problems.append(f"non-resident {page} in a bucket")
            if meta.resident and meta.bucket is not None and meta.bucket is not tl.not_requested:
                t = self.page_next_consumption(meta, now)
                if t is None:
                    continue  # stale entry, cleaned lazily on its next push
                want = tl.bucket_number(t + max(0, now - tl.shifted_at))
                have = position[id(meta.bucket)]
                if abs(want - have) > slack:
                    problems.append(f"{page} in bucket {have}, estimate says {want}")
        return problems
