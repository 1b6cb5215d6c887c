"""Discrete-event simulation of concurrent scan streams over one buffer pool.

Time is integer nanoseconds. A single FIFO channel loads pages at the
configured bandwidth. Order-preserving scans (LRU, PBM) walk their range page
by page, holding one pinned page per column and blocking on misses. CScans
instead ask the active buffer manager for whole chunks.
"""

from __future__ import annotations

import gc
import heapq
import math
from collections import deque
from dataclasses import dataclass, field

from .bufferpool import BufferPool, Miss, PoolExhausted
from .metrics import Metrics, sample_sharing_potential
from .opt import Trace, TraceEvent
from .policies import ActiveBufferManager, LRUPolicy, PBMPolicy
from .storage import PageId, TupleRange
from .workload import (NS_PER_S, RunConfig, cpu_bound_stream_times, footprint,
                       gen_microbenchmark, split_range)

POLICIES = ("lru", "pbm", "cscans")
SHARING_EVERY = 10  # time slices between sharing samples


class SimDeadlock(RuntimeError):
    pass


class EventLoop:
    """Min-heap of ``(time, seq, fn, args)``; equal times run in insertion order.

    Daemon events (periodic housekeeping) do not keep the loop alive.
    """

    def __init__(self):
        self.now = 0
        self._heap: list = []
        self._seq = 0
        self.work = 0
        self.dispatched = 0

    def at(self, time: int, fn, *args, daemon: bool = False) -> None:
        if time < self.now:
            raise ValueError(f"event at {time} scheduled in the past (now {self.now})")
        heapq.heappush(self._heap, (time, self._seq, daemon, fn, args))
        self._seq += 1
        if not daemon:
            self.work += 1

    def after(self, delay: int, fn, *args, daemon: bool = False) -> None:
        self.at(self.now + delay, fn, *args, daemon=daemon)

    def run(self) -> None:
        heap = self._heap
        while heap and self.work:
            time, _, daemon, fn, args = heapq.heappop(heap)
            if not daemon:
                self.work -= 1
            self.now = time
            self.dispatched += 1
            fn(*args)

    def __len__(self):
        return len(self._heap)


class IoChannel:
    """Single work-conserving FIFO device."""

    def __init__(self, loop: EventLoop, io, page_bytes, on_complete):
        self.loop = loop
        self.io = io
        self.page_bytes = page_bytes
        self.on_complete = on_complete
        self.queue: deque = deque()
        self.busy = False
        self.busy_ns = 0
        self.completed = 0

    def submit(self, page) -> None:
        self.queue.append(page)
        if not self.busy:
            self._start()

    def _start(self) -> None:
        page = self.queue.popleft()
        self.busy = True
        dt = self.io.load_time(self.page_bytes(page))
        self.busy_ns += dt
        self.loop.after(dt, self._finish, page)

    def _finish(self, page) -> None:
        self.busy = False
        self.completed += 1
        self.on_complete(page, self.loop.now)
        if self.queue and not self.busy:
            self._start()


class ScanOp:
    """Order-preserving scan over one RID range (no deltas, so RID = SID)."""

    def __init__(self, sim: "Simulation", stream: "StreamRunner", query, rng: TupleRange):
        self.sim = sim
        self.stream = stream
        self.query = query
        self.range = rng
        self.columns = query.columns
        self.pos = rng.begin
        self.held = {col: None for col in self.columns}
        self.tpp = {col: sim.table.column(col).tuples_per_page for col in self.columns}
        self.waiting = 0
        self.stalled = False
        self.produced = 0
        self.last_report = 0
        self.scan_id = None

    def start(self, now: int) -> None:
        self.scan_id = self.sim.policy.register_scan(self.sim.table, self.columns, [self.range], now)
        self.sim.live[id(self)] = self
        self._acquire(now)

    def _acquire(self, now: int) -> None:
        self.stalled = False
        sim = self.sim
        pool = sim.pool
        for col in self.columns:
            index = self.pos // self.tpp[col]
            page = PageId(sim.version, col, index)
            if self.held[col] == page:
                continue
            try:
                res = pool.request_page(page, now)
            except PoolExhausted:
                self.stalled = True
                sim.frame_waiters.append(self)
                return
            self.held[col] = page
            if isinstance(res, Miss):
                self.waiting += 1
                res.ticket.waiters.append(self._loaded)
            if sim.prefetch_depth > 1:
                self._prefetch(col, index, now)
        if self.waiting == 0:
            self._process(now)

    def _prefetch(self, col, index: int, now: int) -> None:
        last = (self.range.end - 1) // self.tpp[col]
        for i in range(index + 1, min(last, index + self.sim.prefetch_depth - 1) + 1):
            page = PageId(self.sim.version, col, i)
            if self.sim.pool.is_resident(page) or page in self.sim.pool.pending:
                continue
            try:
                self.sim.pool.request_page(page, now, pin=False, record=False)
            except PoolExhausted:
                return

    def _loaded(self, page, now: int) -> None:
        self.waiting -= 1
        if self.waiting == 0 and not self.stalled:
            self._process(now)

    def retry(self, now: int) -> None:
        self._acquire(now)

    def _process(self, now: int) -> None:
        q = self.range.end
        for col in self.columns:
            tpp = self.tpp[col]
            q = min(q, (self.pos // tpp + 1) * tpp)
        dt = math.ceil((q - self.pos) * NS_PER_S / self.sim.cpu_rate)
        self.sim.loop.after(dt, self._advance, q)

    def _advance(self, q: int) -> None:
        sim = self.sim
        now = sim.loop.now
        self.produced += q - self.pos
        self.pos = q
        finished = self.pos >= self.range.end
        for col in self.columns:
            page = self.held[col]
            if page is not None and (finished or self.pos // self.tpp[col] != page.page_index):
                self.held[col] = None
                sim.unpin(page, now)
                sim.policy.page_consumed(self.scan_id, page, now)
        if finished:
            sim.policy.unregister_scan(self.scan_id, now)
            del sim.live[id(self)]
            sim.check_tuples(self, len(self.range))
            self.stream.op_done(now)
            return
        if self.produced - self.last_report >= sim.table.chunk_size:
            sim.policy.report_scan_position(self.scan_id, None, self.produced, now)
            self.last_report = self.produced
        self._acquire(now)

    def remaining_pages(self) -> list:
        out = []
        for col in self.columns:
            tpp = self.tpp[col]
            out.extend(PageId(self.sim.version, col, i)
                       for i in range(self.pos // tpp, (self.range.end - 1) // tpp + 1))
        return out


class CScanOp:
    """Chunk-at-a-time scan served by the active buffer manager."""

    def __init__(self, sim: "Simulation", stream: "StreamRunner", query, rng: TupleRange):
        self.sim = sim
        self.stream = stream
        self.query = query
        self.range = rng
        self.produced = 0
        self.cid = None
        self.chunks: list = []

    def start(self, now: int) -> None:
        sim = self.sim
        self.cid = sim.policy.register_cscan(sim.snapshot, sim.table, self.query.columns, [self.range],
                                             in_order=self.query.in_order,
                                             on_deliver=self._on_deliver, now=now)
        sim.live[id(self)] = self
        sim.policy.get_chunk(self.cid, now)

    def _on_deliver(self, cid, chunk, pieces) -> None:
        loop = self.sim.loop
        if chunk is None:
            loop.after(0, self._finish)
            return
        self.chunks.append(chunk.chunk_index)
        n = sum(len(p) for p in pieces)
        self.produced += n
        loop.after(math.ceil(n * NS_PER_S / self.sim.cpu_rate), self._chunk_done)

    def _chunk_done(self) -> None:
        self.sim.policy.get_chunk(self.cid, self.sim.loop.now)

    def _finish(self) -> None:
        sim = self.sim
        now = sim.loop.now
        sim.policy.unregister_cscan(self.cid, now)
        del sim.live[id(self)]
        sim.check_tuples(self, len(self.range))
        self.stream.op_done(now)

    def remaining_pages(self):
        return self.sim.policy.remaining_pages(self.cid)


class StreamRunner:
    def __init__(self, sim: "Simulation", stream_id: int, queries):
        self.sim = sim
        self.stream_id = stream_id
        self.queries = queries
        self.next = 0
        self.outstanding = 0
        self.finished_at: int | None = None

    def start_next(self, now: int) -> None:
        sim = self.sim
        if self.next == len(self.queries):
            self.finished_at = now
            sim.streams_left -= 1
            return
        q = self.queries[self.next]
        self.next += 1
        pieces = [r for r in split_range(q.rid_range, sim.parallelism) if len(r)]
        self.outstanding = len(pieces)
        op_cls = CScanOp if sim.policy_name == "cscans" else ScanOp
        for rng in pieces:
            op_cls(sim, self, q, rng).start(now)

    def op_done(self, now: int) -> None:
        self.outstanding -= 1
        if self.outstanding == 0:
            self.start_next(now)


def make_policy(name: str, cfg: RunConfig):
    if name == "lru":
        return LRUPolicy()
    if name == "pbm":
        return PBMPolicy(time_slice=cfg.time_slice, initial_speed=cfg.workload.cpu_rate)
    if name == "cscans":
        return ActiveBufferManager()
    raise ValueError(f"unknown policy {name!r}; choose from {', '.join(POLICIES)}")


@dataclass
class RunResult:
    metrics: Metrics
    trace: Trace | None
    violations: list = field(default_factory=list)
    capacity: int = 0
    footprint: int = 0


class Simulation:
    def __init__(self, cfg: RunConfig, policy: str, record_trace: bool = True,
                 check_invariants: bool = False, sample_sharing: bool = True):
        self.cfg = cfg
        wl = cfg.workload
        self.policy_name = policy
        self.table = wl.table()
        self.version = self.table.version
        self.snapshot = self.table.master_snapshot()
        self.streams = gen_microbenchmark(wl)
        self.footprint = len(footprint(self.table, self.streams))
        self.capacity = cfg.capacity or max(1, math.ceil(cfg.pool_frac * self.footprint))
        self.cpu_rate = wl.cpu_rate
        self.parallelism = wl.parallelism
        self.prefetch_depth = cfg.prefetch_depth
        self.check_invariants = check_invariants
        self.sample_sharing = sample_sharing
        self.loop = EventLoop()
        self.policy = make_policy(policy, cfg)
        self.trace = [] if record_trace else None
        self.io = IoChannel(self.loop, cfg.io, self.table.page_size, self._load_done)
        self.pool = BufferPool(self.capacity, self.policy, submit=self.io.submit,
                               page_size=self.table.page_size, trace=self.trace)
        if isinstance(self.policy, ActiveBufferManager):
            self.policy.attach(self.pool, schedule=self._schedule_now)
        self.live: dict = {}
        self.frame_waiters: list = []
        self.violations: list = []
        self.sharing: list = []
        self.streams_left = len(self.streams)

    def _schedule_now(self, fn) -> None:
        self.loop.at(self.loop.now, fn, self.loop.now)

    def _load_done(self, page, now: int) -> None:
        self.pool.complete_load(page, now)
        if self.frame_waiters and self.pool.evictable(page):
            self._wake_frame_waiters(now)

    def unpin(self, page, now: int) -> None:
        self.pool.unpin(page)
        if self.frame_waiters and self.pool.evictable(page):
            self._wake_frame_waiters(now)

    def _wake_frame_waiters(self, now: int) -> None:
        waiters, self.frame_waiters = self.frame_waiters, []
        for op in waiters:
            self.loop.at(now, op.retry, now)

    def check_tuples(self, op, expected: int) -> None:
        if op.produced != expected:
            self.violations.append(f"scan over {tuple(op.range)} produced {op.produced} tuples, "
                                   f"expected {expected}")

    def _refresh(self) -> None:
        now = self.loop.now
        self.policy.refresh_requested_buckets(now)
        if self.check_invariants:
            self.violations.extend(f"t={now}: {p}" for p in self.policy.check_invariants(now))
        if self.streams_left:
            self.loop.after(self.cfg.time_slice, self._refresh, daemon=True)

    def _sample(self) -> None:
        now = self.loop.now
        self.sharing.append(sample_sharing_potential((op.remaining_pages() for op in self.live.values()), now))
        if self.streams_left:
            self.loop.after(SHARING_EVERY * self.cfg.time_slice, self._sample, daemon=True)

    def run(self) -> RunResult:
        # the run allocates many short-lived objects and few cycles; pausing the
        # cyclic collector saves about a fifth of the runtime
        was_enabled = gc.isenabled()
        gc.disable()
        try:
            return self._run()
        finally:
            if was_enabled:
                gc.enable()

    def _run(self) -> RunResult:
        runners = [StreamRunner(self, s, qs) for s, qs in enumerate(self.streams)]
        for r in runners:
            r.start_next(0)
        if isinstance(self.policy, PBMPolicy):
            self.loop.at(self.cfg.time_slice, self._refresh, daemon=True)
        if self.sample_sharing:
            self.loop.at(0, self._sample, daemon=True)
        self.loop.run()
        if self.streams_left:
            stuck = [f"{type(op).__name__}{tuple(op.range)}" for op in self.live.values()][:5]
            raise SimDeadlock(
                f"{self.streams_left} stream(s) unfinished at t={self.loop.now} ns with no pending work; "
                f"pool {self.pool.used}/{self.capacity} frames, "
                f"{sum(1 for f in self.pool.frames.values() if f.pin_count)} pinned; live scans: {stuck}")
        if isinstance(self.policy, PBMPolicy) and self.check_invariants:
            self.violations.extend(self.policy.check_invariants(self.loop.now))
        wl = self.cfg.workload
        m = Metrics(self.policy_name, wl.streams, self.cfg.pool_frac, self.cfg.io.bandwidth, wl.seed,
                    self.pool.io_pages_loaded, self.pool.io_bytes,
                    [r.finished_at for r in runners], self.sharing, self.capacity, self.footprint)
        m.extra.update(hits=self.pool.hits, misses=self.pool.misses, evictions=self.pool.evictions,
                       events=self.loop.dispatched, end_ns=self.loop.now, io_busy_ns=self.io.busy_ns,
                       cpu_bound_ns=cpu_bound_stream_times(wl, self.streams))
        trace = Trace(TraceEvent(t, p) for t, p in self.trace) if self.trace is not None else None
        return RunResult(m, trace, self.violations, self.capacity, self.footprint)


def run(cfg: RunConfig, policy: str, **kwargs) -> RunResult:
    return Simulation(cfg, policy, **kwargs).run()
