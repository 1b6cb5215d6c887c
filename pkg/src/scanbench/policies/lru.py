"""Least-recently-used eviction."""

from __future__ import annotations

from collections import OrderedDict

from .base import Policy


class LRUPolicy(Policy):
    """Recency list over resident pages; the head of the OrderedDict is the LRU end."""

    name = "lru"

    def __init__(self):
        self.recency: OrderedDict = OrderedDict()

    def __len__(self):
        return len(self.recency)

    def on_access(self, page, now=0):
        self.recency.move_to_end(page)

    def on_loaded(self, page, now=0):
        self.recency[page] = None
        self.recency.move_to_end(page)

    def on_evicted(self, page, now=0):
        self.recency.pop(page, None)

    def select_victims(self, k, now=0, evictable=None):
        out = []
        if k <= 0:
            return out
        for page in self.recency:
            if evictable is None or evictable(page):
                out.append(page)
                if len(out) == k:
                    break
        return out
