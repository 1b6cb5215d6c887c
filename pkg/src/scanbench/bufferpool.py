"""Fixed-capacity page pool with pin counts and pluggable eviction policy."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Hashable, NamedTuple

from .storage import DEFAULT_PAGE_SIZE

DEFAULT_GROUP_SIZE = 16


class PoolExhausted(RuntimeError):
    """Every frame is pinned or reserved; capacity is too small for the workload."""


class PoolError(RuntimeError):
    """Internal protocol violation (double completion, unpin below zero, ...)."""


@dataclass
class Frame:
    page: Hashable
    pin_count: int = 0
    loaded_at: int = 0


@dataclass
class LoadTicket:
    page: Hashable
    issued_at: int
    pins: int = 0
    waiters: list[Callable] = field(default_factory=list)


class Hit(NamedTuple):
    frame: Frame


class Miss(NamedTuple):
    ticket: LoadTicket


class BufferPool:
    """Frames are either resident (``frames``) or reserved for an in-flight load.

    ``submit`` is called with the page on every miss that starts a new load; the
    owner of the I/O channel later calls :meth:`complete_load`. Victim choice is
    delegated to ``policy.select_victims`` but the pool alone decides pin safety.
    """

    def __init__(self, capacity: int, policy, submit: Callable | None = None,
                 group_size: int = DEFAULT_GROUP_SIZE, page_size: Callable | None = None,
                 trace: list | None = None):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = capacity
        self.policy = policy
        self.group_size = group_size
        self.frames: dict[Hashable, Frame] = {}
        self.pending: dict[Hashable, LoadTicket] = {}
        self._submit = submit
        self._page_size = page_size or (lambda page: DEFAULT_PAGE_SIZE)
        self.trace = trace
        self.io_pages_loaded = 0
        self.io_bytes = 0
        self.hits = 0
        self.misses = 0
        self.evictions = 0
        self.peak_used = 0

    @property
    def used(self) -> int:
        return len(self.frames) + len(self.pending)

    @property
    def free_frames(self) -> int:
        return self.capacity - self.used

    def is_resident(self, page) -> bool:
        return page in self.frames

    def is_pinned(self, page) -> bool:
        frame = self.frames.get(page)
        return frame is not None and frame.pin_count > 0

    def evictable(self, page) -> bool:
        frame = self.frames.get(page)
        return frame is not None and frame.pin_count == 0

    def request_page(self, page, now: int, pin: bool = True, record: bool = True) -> Hit | Miss:
        if record and self.trace is not None:
            self.trace.append((now, page))
        frame = self.frames.get(page)
        if frame is not None:
            self.hits += 1
            if pin:
                frame.pin_count += 1
            self.policy.on_access(page, now)
            return Hit(frame)
        self.misses += 1
        ticket = self.pending.get(page)
        if ticket is None:
            if self.used >= self.capacity:
                self.evict(1, now)
            ticket = LoadTicket(page, now)
            self.pending[page] = ticket
            self.peak_used = max(self.peak_used, self.used)
            if self._submit is not None:
                self._submit(page)
        if pin:
            ticket.pins += 1
        return Miss(ticket)

    def complete_load(self, page, now: int) -> Frame:
        ticket = self.pending.pop(page, None)
        if ticket is None or page in self.frames:
            raise PoolError(f"load completion for {page} without an outstanding ticket")
        frame = Frame(page, ticket.pins, now)
        self.frames[page] = frame
        self.io_pages_loaded += 1
        self.io_bytes += self._page_size(page)
        self.policy.on_loaded(page, now)
        for waiter in ticket.waiters:
            waiter(page, now)
        return frame

    def evict(self, n_min: int, now: int = 0) -> list:
        want = max(n_min, self.group_size)
        victims = self.policy.select_victims(want, now, self.evictable)
        # the policy nominates; only unpinned resident pages actually go
        victims = [p for p in dict.fromkeys(victims) if self.evictable(p)][:want]
        if not victims and n_min > 0:
            raise PoolExhausted(
                f"no evictable page among {len(self.frames)} resident, {len(self.pending)} loading "
                f"(capacity {self.capacity})")
        for page in victims:
            self._drop(page, now)
        return victims

    def evict_pages(self, pages, now: int = 0) -> list:
        """Evict an explicit victim list; pinned or absent pages are skipped."""
        out = []
        for page in pages:
            if self.evictable(page):
                self._drop(page, now)
                out.append(page)
        return out

    def _drop(self, page, now: int) -> None:
        del self.frames[page]
        self.evictions += 1
        self.policy.on_evicted(page, now)

    def pin(self, page) -> None:
        frame = self.frames.get(page)
        if frame is None:
            raise PoolError(f"pin of non-resident page {page}")
        frame.pin_count += 1

    def unpin(self, page) -> None:
        frame = self.frames.get(page)
        if frame is None or frame.pin_count <= 0:
            raise PoolError(f"unpin of unpinned page {page}")
        frame.pin_count -= 1
