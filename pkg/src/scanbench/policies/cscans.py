"""Cooperative Scans: an active buffer manager serving chunk-at-a-time scans.

CScans register the RID ranges they must produce. The manager converts them
to stable-position chunks, loads chunks in the order its relevance functions
prefer and hands cached chunks to waiting CScans, possibly out of order. Each
delivery is translated back to RID ranges and trimmed so a CScan never
produces a tuple twice.

Relevance scores used here:

* query: starved CScans first (nothing cached and undelivered), then fewest
  remaining chunks, then lowest id;
* load: number of interested CScans, plus ``shared_bonus`` for shared chunks;
  ties go to the lowest chunk index;
* use: fewest interested CScans among cached chunks, lowest index on ties;
  in-order CScans always take their next chunk;
* keep: same score as load; the lowest-scoring cached chunk is evicted only
  when it scores below the chunk about to be loaded (ties evict the higher
  index first).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

from ..delta import DeltaList, trim_delivered
from ..storage import ChunkId, Snapshot, TableDef, TupleRange
from .base import Policy

SHARED_BONUS = 0.5


class ABMError(RuntimeError):
    pass


def longest_common_prefix(a, b) -> int:
    a, b = tuple(a), tuple(b)
    n = min(len(a), len(b))
    if a[:n] == b[:n]:
        return n
    lo, hi = 0, n  # a[:lo] matches, a[:hi] does not
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if a[:mid] == b[:mid]:
            lo = mid
        else:
            hi = mid
    return lo


def recompute_shared_prefix(snapshots) -> dict:
    """Per column, the longest page prefix common to at least two snapshots.

    Two CScans on the same snapshot count twice, so pass one snapshot per CScan.
    """
    snapshots = list(snapshots)
    if not snapshots:
        return {}
    out = {}
    for col in snapshots[0].pages_per_column:
        lists = sorted(tuple(s.pages_per_column[col]) for s in snapshots)
        best, prefix = 0, ()
        # after sorting, the longest pairwise common prefix is between neighbours
        for a, b in zip(lists, lists[1:]):
            n = longest_common_prefix(a, b)
            if n > best:
                best, prefix = n, a[:n]
        out[col] = prefix
    return out


@dataclass
class ChunkMeta:
    chunk: ChunkId
    interested: set = field(default_factory=set)
    shared: bool = False
    classified: bool = False


@dataclass
class TableVersionMeta:
    table: TableDef
    version: int
    cscans: set = field(default_factory=set)
    chunks: dict = field(default_factory=dict)
    prefix: dict = field(default_factory=dict)
    prefix_key: tuple | None = None

    def chunk(self, index: int) -> ChunkMeta:
        meta = self.chunks.get(index)
        if meta is None:
            meta = self.chunks[index] = ChunkMeta(ChunkId(self.version, index))
        return meta


@dataclass
class CScanState:
    cscan_id: int
    table: TableDef
    snapshot: Snapshot
    columns: tuple
    rid_ranges: list
    delta: DeltaList
    in_order: bool
    case: str
    on_deliver: Callable | None = None
    needs: dict = field(default_factory=dict)  # chunk index -> [PageId]
    order: list = field(default_factory=list)  # needed chunk indexes, ascending
    delivered: set = field(default_factory=set)
    missing: dict = field(default_factory=dict)
    ready: set = field(default_factory=set)
    processed: tuple = ()
    waiting: bool = False
    holding: list = field(default_factory=list)
    produced: list = field(default_factory=list)

    @property
    def version(self) -> int:
        return self.snapshot.table_version

    @property
    def remaining(self) -> int:
        return len(self.order) - len(self.delivered)

    @property
    def starved(self) -> bool:
        return self.remaining > 0 and not self.ready

    def next_in_order(self) -> int | None:
        for idx in self.order:
            if idx not in self.delivered:
                return idx
        return None


class ActiveBufferManager(Policy):
    name = "cscans"

    def __init__(self, shared_bonus: float = SHARED_BONUS):
        self.shared_bonus = shared_bonus
        self.pool = None
        self._schedule = None
        self.versions: dict[int, TableVersionMeta] = {}
        self.cscans: dict[int, CScanState] = {}
        self._next_id = 0
        self.page_needers: dict = {}  # page -> {(cscan_id, chunk index)}
        self.page_chunks: dict = {}  # page -> {(version, chunk index)}
        self.chunk_resident: dict = {}  # (version, chunk index) -> {page}
        self.loading: dict | None = None
        self.now = 0
        self.log: list = []
        self._running = False
        self._again = False
        self._step_pending = False

    def attach(self, pool, schedule: Callable | None = None) -> None:
        """``schedule(fn)`` must call ``fn(now)`` soon at the current simulated time."""
        self.pool = pool
        self._schedule = schedule

    # -- registration ---------------------------------------------------
    def register_cscan(self, snapshot: Snapshot, table: TableDef, columns, rid_ranges,
                       in_order: bool = False, delta: DeltaList | None = None,
                       on_deliver: Callable | None = None, now: int = 0) -> int:
        self.now = now
        delta = delta or DeltaList.empty(snapshot.tuple_count)
        if delta.stable_count != snapshot.tuple_count:
            raise ABMError("delta list and snapshot disagree on the stable tuple count")
        case = self._classify(snapshot, table)
        cid = self._next_id
        self._next_id += 1
        cs = CScanState(cid, table, snapshot, tuple(columns), [TupleRange(*r) for r in rid_ranges],
                        delta, in_order, case, on_deliver)
        for rr in cs.rid_ranges:
            sr = delta.rid_range_to_sid_range(rr)
            for idx in table.chunks_for_range(sr):
                sub = table.chunk_range(idx, snapshot.tuple_count).intersect(sr)
                pages = cs.needs.setdefault(idx, [])
                for col in cs.columns:
                    for p in table.pages_for_range(col, sub, snapshot):
                        if p not in pages:
                            pages.append(p)
        cs.order = sorted(cs.needs)
        widest = max((len(p) for p in cs.needs.values()), default=0)
        if self.pool is not None and widest > self.pool.capacity:
            raise ABMError(f"a chunk needs {widest} pages but the pool holds {self.pool.capacity}")
        self.cscans[cid] = cs

        meta = self.versions.get(cs.version)
        if meta is None:
            meta = self.versions[cs.version] = TableVersionMeta(table, cs.version)
        meta.cscans.add(cid)
        resident = self.pool.is_resident if self.pool is not None else (lambda p: False)
        for idx, pages in cs.needs.items():
            meta.chunk(idx).interested.add(cid)
            key = (cs.version, idx)
            miss = 0
            for p in pages:
                self.page_needers.setdefault(p, set()).add((cid, idx))
                self.page_chunks.setdefault(p, set()).add(key)
                if resident(p):
                    self.chunk_resident.setdefault(key, set()).add(p)
                else:
                    miss += 1
            cs.missing[idx] = miss
            if miss == 0:
                cs.ready.add(idx)
        self._refresh_shared(meta)
        self._kick()
        return cid

    def _classify(self, snapshot: Snapshot, table: TableDef) -> str:
        live = [self.cscans[c].snapshot for m in self.versions.values()
                if m.table.table_id == table.table_id for c in m.cscans]
        if not live:
            return "i"
        if any(s.pages_per_column == snapshot.pages_per_column and s.tuple_count == snapshot.tuple_count
               for s in live):
            return "ii"
        for s in live:
            if any(longest_common_prefix(s.pages_per_column.get(col, ()), pages) > 0
                   for col, pages in snapshot.pages_per_column.items()):
                return "iii"
        return "iv"

    def _refresh_shared(self, meta: TableVersionMeta) -> None:
        snaps = [self.cscans[c].snapshot for c in sorted(meta.cscans)]
        if not snaps:
            meta.prefix = {}
            return
        distinct = {id(s): s for s in snaps}
        if len(distinct) < len(snaps):
            # some snapshot is used by two CScans: compare its page lists only once
            counts = {}
            for s in snaps:
                counts[id(s)] = counts.get(id(s), 0) + 1
            snaps = [s for k, s in distinct.items() for _ in range(min(counts[k], 2))]
        meta.prefix = recompute_shared_prefix(snaps)
        limit = max(s.tuple_count for s in snaps)
        key = (limit, tuple(sorted((c, len(p)) for c, p in meta.prefix.items())))
        changed = key != meta.prefix_key
        meta.prefix_key = key
        table = meta.table
        for idx, cm in meta.chunks.items():
            if changed or not cm.classified:
                cm.shared = self._chunk_shared(table, idx, limit, meta.prefix)
                cm.classified = True

    @staticmethod
    def _chunk_shared(table: TableDef, idx: int, limit: int, prefix: dict) -> bool:
        if idx * table.chunk_size >= limit:
            return False
        rng = table.chunk_range(idx, limit)
        for col in table.column_ids:
            positions = table.page_positions(col, rng, limit)
            if len(positions) and positions[-1] >= len(prefix.get(col, ())):
                return False
        return True

    def chunk_is_shared(self, version: int, idx: int) -> bool:
        meta = self.versions.get(version)
        return bool(meta and idx in meta.chunks and meta.chunks[idx].shared)

    def unregister_cscan(self, cscan_id: int, now: int = 0) -> None:
        self.now = now
        cs = self.cscans.pop(cscan_id, None)
        if cs is None:
            raise ABMError(f"unknown cscan {cscan_id}")
        self._release(cs)
        meta = self.versions[cs.version]
        for idx, pages in cs.needs.items():
            cm = meta.chunks.get(idx)
            if cm is not None:
                cm.interested.discard(cscan_id)
            if idx in cs.delivered:
                continue
            for p in pages:
                self._drop_need(p, cscan_id, idx)
        meta.cscans.discard(cscan_id)
        if not meta.cscans:
            del self.versions[cs.version]
        else:
            for idx in [i for i, cm in meta.chunks.items() if not cm.interested]:
                del meta.chunks[idx]
            self._refresh_shared(meta)
        self._kick()

    def _drop_need(self, page, cscan_id, idx) -> None:
        needers = self.page_needers.get(page)
        if needers is not None:
            needers.discard((cscan_id, idx))
            if not needers:
                del self.page_needers[page]
                if self.pool is None or not self.pool.is_resident(page):
                    self.page_chunks.pop(page, None)

    # -- relevance functions --------------------------------------------
    def query_relevance(self, cs: CScanState) -> tuple:
        """Sort key; smaller means more urgent."""
        return (0 if cs.starved else 1, cs.remaining, cs.cscan_id)

    def _chunk_score(self, version: int, idx: int) -> float:
        meta = self.versions.get(version)
        cm = meta.chunks.get(idx) if meta is not None else None
        if cm is None:
            return 0.0
        return len(cm.interested) + (self.shared_bonus if cm.shared else 0.0)

    def load_relevance(self, version: int, idx: int) -> float:
        return self._chunk_score(version, idx)

    def keep_relevance(self, version: int, idx: int) -> float:
        return self._chunk_score(version, idx)

    def use_relevance(self, cs: CScanState) -> int | None:
        """Cached chunk to hand to ``cs`` next, or None."""
        if cs.in_order:
            nxt = cs.next_in_order()
            return nxt if nxt is not None and nxt in cs.ready else None
        if not cs.ready:
            return None
        meta = self.versions[cs.version]
        return min(cs.ready, key=lambda i: (len(meta.chunks[i].interested), i))

    def load_candidate(self, cs: CScanState) -> tuple[float, int] | None:
        loading = self.loading["key"] if self.loading else None
        if cs.in_order:
            nxt = cs.next_in_order()
            cands = [] if nxt is None or nxt in cs.ready else [nxt]
        else:
            cands = [i for i in cs.order if i not in cs.delivered and i not in cs.ready]
        cands = [i for i in cands if (cs.version, i) != loading]
        if not cands:
            return None
        return max(((self.load_relevance(cs.version, i), -i) for i in cands))

    # -- the scheduling loop --------------------------------------------
    def get_chunk(self, cscan_id: int, now: int = 0) -> None:
        """Ask for the next chunk; the answer arrives through ``on_deliver``.

        Releases the pins of the previously delivered chunk. When everything is
        delivered the callback receives ``None`` (Done).
        """
        self.now = now
        cs = self.cscans.get(cscan_id)
        if cs is None:
            raise ABMError(f"unknown cscan {cscan_id}")
        self._release(cs)
        if cs.remaining == 0:
            cs.waiting = False
            self._emit(cs, None, [])
            self._kick()
            return
        cs.waiting = True
        self._kick()

    def release_chunk(self, cscan_id: int, now: int = 0) -> None:
        self.now = now
        self._release(self.cscans[cscan_id])
        self._kick()

    def _release(self, cs: CScanState) -> None:
        for p in cs.holding:
            self.pool.unpin(p)
        cs.holding = []

    def _kick(self) -> None:
        if self.pool is None:
            return
        if self._schedule is not None:
            if not self._step_pending:
                self._step_pending = True
                self._schedule(self._scheduled_run)
            return
        if self._running:
            self._again = True
            return
        self._running = True
        try:
            self.run_steps(self.now)
            while self._again:
                self._again = False
                self.run_steps(self.now)
        finally:
            self._running = False

    def _scheduled_run(self, now: int) -> None:
        self._step_pending = False
        self.run_steps(now)

    def run_steps(self, now: int) -> list:
        actions = []
        while True:
            action = self.abm_step(now)
            actions.append(action)
            if action[0] == "idle" or action[0] == "load":
                break
        return actions

    def abm_step(self, now: int) -> tuple:
        self.now = now
        waiting = [cs for cs in self.cscans.values() if cs.waiting and cs.ready]
        for cs in sorted(waiting, key=self.query_relevance):
            idx = self.use_relevance(cs)
            if idx is not None:
                self._deliver(cs, idx, now)
                return ("deliver", cs.cscan_id, idx)
        if self.loading is not None:
            return ("idle",)
        active = [cs for cs in self.cscans.values() if cs.remaining]
        for cs in sorted(active, key=self.query_relevance):
            cand = self.load_candidate(cs)
            if cand is None:
                continue
            score, neg_idx = cand
            idx = -neg_idx
            if self._start_load(cs.version, idx, score, now):
                self.log.append(("load", now, cs.version, idx, cs.starved))
                return ("load", cs.version, idx)
            break
        return ("idle",)

    def _chunk_need(self, version: int, idx: int) -> list:
        meta = self.versions[version]
        pages = []
        seen = set()
        for cid in sorted(meta.chunks[idx].interested):
            for p in self.cscans[cid].needs[idx]:
                if p not in seen:
                    seen.add(p)
                    pages.append(p)
        return pages

    def _start_load(self, version: int, idx: int, score: float, now: int) -> bool:
        pool = self.pool
        key = (version, idx)
        need = [p for p in self._chunk_need(version, idx) if not pool.is_resident(p)]
        need = [p for p in need if p not in pool.pending]
        if pool.free_frames < len(need):
            # nothing in flight and nobody processing: only eviction can make progress
            stalled = (not any(cs.holding for cs in self.cscans.values())
                       and any(cs.waiting for cs in self.cscans.values()))
            for vkey, keep in self._keep_order(exclude=key):
                if pool.free_frames >= len(need):
                    break
                if keep >= score and not stalled:
                    break
                pool.evict_pages([p for p in self.chunk_resident.get(vkey, ()) if pool.evictable(p)], now)
            if pool.free_frames < len(need):
                return False
        if not need:
            return False
        self.loading = {"key": key, "pages": set(need)}
        for p in need:
            res = pool.request_page(p, now, pin=False, record=False)
            ticket = getattr(res, "ticket", None)
            if ticket is not None:
                ticket.waiters.append(self._page_loaded)
            else:
                self.loading["pages"].discard(p)
        if not self.loading["pages"]:
            self.loading = None
        return True

    def _keep_order(self, exclude=None) -> list:
        cands = []
        for key, pages in self.chunk_resident.items():
            if key == exclude or not pages:
                continue
            if not any(self.pool.evictable(p) for p in pages):
                continue
            cands.append((self.keep_relevance(*key), -key[1], key))
        cands.sort()
        return [(key, score) for score, _, key in cands]

    def _page_loaded(self, page, now: int) -> None:
        if self.loading is None or page not in self.loading["pages"]:
            return
        self.loading["pages"].discard(page)
        if self.loading["pages"]:
            return
        version, idx = self.loading["key"]
        self.loading = None
        meta = self.versions.get(version)
        if meta is not None and idx in meta.chunks:
            for cid in sorted(meta.chunks[idx].interested):
                cs = self.cscans[cid]
                if cs.waiting and idx in cs.ready and (not cs.in_order or cs.next_in_order() == idx):
                    self._deliver(cs, idx, now)
        self.now = now
        self._kick()

    def _deliver(self, cs: CScanState, idx: int, now: int) -> None:
        for p in cs.needs[idx]:
            self.pool.request_page(p, now, pin=True, record=True)
        cs.holding = list(cs.needs[idx])
        cs.delivered.add(idx)
        cs.ready.discard(idx)
        cs.waiting = False
        meta = self.versions[cs.version]
        meta.chunks[idx].interested.discard(cs.cscan_id)
        for p in cs.needs[idx]:
            self._drop_need(p, cs.cscan_id, idx)
        sid_range = cs.table.chunk_range(idx, cs.snapshot.tuple_count)
        chunk_rids = cs.delta.chunk_to_rid_range(sid_range)
        pieces = []
        for rr in cs.rid_ranges:
            cand = chunk_rids.intersect(rr)
            if cand.begin < cand.end:
                new, cs.processed = trim_delivered(cs.processed, cand)
                pieces.extend(new)
        cs.produced.extend(pieces)
        self.log.append(("deliver", now, cs.cscan_id, idx))
        self._emit(cs, ChunkId(cs.version, idx), pieces)

    def _emit(self, cs: CScanState, chunk, pieces) -> None:
        if cs.on_deliver is not None:
            cs.on_deliver(cs.cscan_id, chunk, pieces)

    # -- pool callbacks -------------------------------------------------
    def on_loaded(self, page, now=0):
        for key in self.page_chunks.get(page, ()):
            self.chunk_resident.setdefault(key, set()).add(page)
        for cid, idx in self.page_needers.get(page, ()):
            cs = self.cscans[cid]
            cs.missing[idx] -= 1
            if cs.missing[idx] == 0 and idx not in cs.delivered:
                cs.ready.add(idx)

    def on_evicted(self, page, now=0):
        for key in self.page_chunks.get(page, ()):
            pages = self.chunk_resident.get(key)
            if pages is not None:
                pages.discard(page)
                if not pages:
                    del self.chunk_resident[key]
        for cid, idx in self.page_needers.get(page, ()):
            cs = self.cscans[cid]
            if cs.missing[idx] == 0:
                cs.ready.discard(idx)
            cs.missing[idx] += 1
        if page not in self.page_needers:
            self.page_chunks.pop(page, None)

    def select_victims(self, k, now=0, evictable=None):
        out = []
        for key, _ in self._keep_order():
            for p in sorted(self.chunk_resident.get(key, ())):
                if evictable is None or evictable(p):
                    out.append(p)
            if len(out) >= k:
                break
        return out[:k] if k < len(out) else out

    # -- introspection --------------------------------------------------
    def remaining_pages(self, cscan_id: int) -> set:
        cs = self.cscans[cscan_id]
        out = set()
        for idx, pages in cs.needs.items():
            if idx not in cs.delivered:
                out.update(pages)
        return out
