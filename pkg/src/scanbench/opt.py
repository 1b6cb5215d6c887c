"""Belady's OPT over a page-reference trace, plus an exhaustive checker."""

from __future__ import annotations

import heapq
from collections import OrderedDict
from functools import lru_cache
from pathlib import Path
from typing import Iterable, NamedTuple

from .storage import PageId

INF = float("inf")
MAX_BRUTE_TRACE = 20
MAX_BRUTE_CAPACITY = 4


class TraceEvent(NamedTuple):
    time_ns: int
    page: PageId


class Trace(list):
    """List of ``TraceEvent`` in non-decreasing time order."""

    @classmethod
    def of(cls, events: Iterable) -> "Trace":
        return cls(TraceEvent(int(t), PageId(*p)) for t, p in events)

    def pages(self) -> list:
        return [e.page for e in self]


def _refs(trace) -> list:
    out = []
    for e in trace:
        out.append(e.page if isinstance(e, TraceEvent) else e)
    return out


def next_use(refs: list) -> list:
    """``nxt[i]`` is the index of the next reference to ``refs[i]`` (or INF)."""
    nxt = [INF] * len(refs)
    last: dict = {}
    for i in range(len(refs) - 1, -1, -1):
        nxt[i] = last.get(refs[i], INF)
        last[refs[i]] = i
    return nxt


def opt_replay(trace, capacity: int) -> int:
    """Miss count of Belady's algorithm; ties among never-used pages go to the largest id."""
    return len(opt_missed_pages(trace, capacity))


def opt_missed_pages(trace, capacity: int) -> list:
    """Pages loaded by Belady's algorithm, in load order."""
    if capacity < 1:
        raise ValueError("capacity must be >= 1")
    refs = _refs(trace)
    nxt = next_use(refs)
    resident: dict = {}  # page -> next use index
    heap: list = []  # (-next_use, -rank, page); lazily invalidated
    rank = {p: i for i, p in enumerate(sorted(set(refs)))}
    missed = []
    for i, page in enumerate(refs):
        if page not in resident:
            missed.append(page)
            if len(resident) >= capacity:
                while True:
                    neg_use, _, victim = heapq.heappop(heap)
                    if resident.get(victim) == -neg_use:
                        del resident[victim]
                        break
        resident[page] = nxt[i]
        heapq.heappush(heap, (-nxt[i], -rank[page], page))
    return missed


def lru_replay(trace, capacity: int) -> int:
    if capacity < 1:
        raise ValueError("capacity must be >= 1")
    cache: OrderedDict = OrderedDict()
    misses = 0
    for page in _refs(trace):
        if page in cache:
            cache.move_to_end(page)
            continue
        misses += 1
        if len(cache) >= capacity:
            cache.popitem(last=False)
        cache[page] = True
    return misses


def brute_force_min_misses(trace, capacity: int) -> int:
    """Minimum misses over every eviction choice. Tiny instances only."""
    refs = _refs(trace)
    if len(refs) > MAX_BRUTE_TRACE or capacity > MAX_BRUTE_CAPACITY:
        raise ValueError(f"instance too large for exhaustive search "
                         f"(trace {len(refs)} > {MAX_BRUTE_TRACE} or capacity {capacity} > {MAX_BRUTE_CAPACITY})")
    if capacity < 1:
        raise ValueError("capacity must be >= 1")

    @lru_cache(maxsize=None)
    def best(i: int, cache: frozenset) -> int:
        if i == len(refs):
            return 0
        page = refs[i]
        if page in cache:
            return best(i + 1, cache)
        if len(cache) < capacity:
            return 1 + best(i + 1, cache | {page})
        return 1 + min(best(i + 1, (cache - {v}) | {page}) for v in cache)

    return best(0, frozenset())


def write_trace(trace, path) -> None:
    lines = [f"{int(t)} {p[0]} {p[1]} {p[2]}\n" for t, p in trace]
    Path(path).write_text("".join(lines))


def read_trace(path) -> Trace:
    out = Trace()
    for n, line in enumerate(Path(path).read_text().splitlines(), 1):
        if not line.strip():
            continue
        fields = line.split()
        if len(fields) != 4:
            raise ValueError(f"{path}:{n}: expected 4 fields, got {len(fields)}")
        t, v, c, i = (int(x) for x in fields)
        if out and t < out[-1].time_ns:
            raise ValueError(f"{path}:{n}: time goes backwards")
        out.append(TraceEvent(t, PageId(v, c, i)))
    return out
