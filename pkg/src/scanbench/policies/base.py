"""Callback contract shared by all eviction policies.

The pool calls ``on_access``, ``on_loaded``, ``select_victims`` and
``on_evicted`` while it holds exclusive access. Scan operators additionally
report their plans and progress through the scan hooks; policies that do not
use that information inherit the no-op versions.
"""

from __future__ import annotations


class Policy:
    name = "base"

    def on_access(self, page, now: int) -> None:
        pass

    def on_loaded(self, page, now: int) -> None:
        pass

    def on_evicted(self, page, now: int) -> None:
        pass

    def select_victims(self, k: int, now: int, evictable=None) -> list:
        raise NotImplementedError

    # scan hooks
    def register_scan(self, table, columns, range_list, now: int, snapshot=None) -> int | None:
        return None

    def report_scan_position(self, scan_id, column, tuples_consumed: int, now: int) -> None:
        pass

    def page_consumed(self, scan_id, page, now: int) -> None:
        pass

    def unregister_scan(self, scan_id, now: int) -> None:
        pass
