"""Positional deltas and SID/RID translation.

Stable positions (SIDs) number the tuples in stable storage; visible positions
(RIDs) number the stream a query sees after deletes and inserts are merged in.
Deltas are kept as a flat list keyed by SID. An ``Insert(k)`` at SID ``s``
places ``k`` new tuples directly before stable tuple ``s`` (or at the end of
the table when ``s`` equals the stable count); those tuples translate back to
SID ``s``.
"""

from __future__ import annotations

import bisect
from dataclasses import dataclass, field
from itertools import accumulate
from typing import Iterable, Literal, NamedTuple

from .storage import TupleRange


class DeltaError(ValueError):
    pass


class DeltaEntry(NamedTuple):
    sid: int
    kind: Literal["insert", "delete"]
    count: int = 1


def Insert(sid: int, count: int = 1) -> DeltaEntry:
    return DeltaEntry(sid, "insert", count)


def Delete(sid: int) -> DeltaEntry:
    return DeltaEntry(sid, "delete", 1)


@dataclass(frozen=True)
class DeltaList:
    stable_count: int
    entries: tuple[DeltaEntry, ...] = ()
    _del: list = field(init=False, repr=False, compare=False)
    _ins_keys: list = field(init=False, repr=False, compare=False)
    _ins_prefix: list = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        # inserts sort before a delete on the same sid
        entries = tuple(sorted(self.entries, key=lambda e: (e.sid, e.kind != "insert")))
        object.__setattr__(self, "entries", entries)
        deletes, ins_keys, ins_counts = [], [], []
        for e in entries:
            if e.kind == "delete":
                if not 0 <= e.sid < self.stable_count:
                    raise DeltaError(f"delete of non-existent stable tuple {e.sid}")
                if deletes and deletes[-1] == e.sid:
                    raise DeltaError(f"duplicate delete at sid {e.sid}")
                deletes.append(e.sid)
            elif e.kind == "insert":
                if e.count < 1:
                    raise DeltaError("insert count must be >= 1")
                if not 0 <= e.sid <= self.stable_count:
                    raise DeltaError(f"insert at sid {e.sid} outside [0, {self.stable_count}]")
                if ins_keys and ins_keys[-1] == e.sid:
                    ins_counts[-1] += e.count
                else:
                    ins_keys.append(e.sid)
                    ins_counts.append(e.count)
            else:
                raise DeltaError(f"unknown delta kind {e.kind!r}")
        object.__setattr__(self, "_del", deletes)
        object.__setattr__(self, "_ins_keys", ins_keys)
        object.__setattr__(self, "_ins_prefix", [0, *accumulate(ins_counts)])

    @classmethod
    def empty(cls, stable_count: int) -> "DeltaList":
        return cls(stable_count)

    @property
    def visible_count(self) -> int:
        return self.stable_count - len(self._del) + self._ins_prefix[-1]

    def _visible_before(self, sid: int) -> int:
        """Number of visible tuples whose SID is < ``sid``."""
        deleted = bisect.bisect_left(self._del, sid)
        inserted = self._ins_prefix[bisect.bisect_left(self._ins_keys, sid)]
        return min(sid, self.stable_count) - deleted + inserted

    def rid_to_sid(self, rid: int) -> int:
        if not 0 <= rid < self.visible_count:
            raise DeltaError(f"rid {rid} outside [0, {self.visible_count})")
        if not self.entries:
            return rid
        candidates = range(self.stable_count + 1)
        return bisect.bisect_right(candidates, rid, key=lambda s: self._visible_before(s + 1))

    def sid_to_rid_low(self, sid: int) -> int:
        self._check_sid(sid)
        return self._visible_before(sid)

    def sid_to_rid_high(self, sid: int) -> int:
        self._check_sid(sid)
        return self._visible_before(sid + 1) - 1

    def _check_sid(self, sid: int) -> None:
        if not 0 <= sid <= self.stable_count:
            raise DeltaError(f"sid {sid} outside [0, {self.stable_count}]")

    def chunk_to_rid_range(self, sid_range: TupleRange) -> TupleRange:
        """Widest RID range producible from a SID range and its attached inserts.

        Inserts after the last stable tuple belong to the range that ends the table.
        """
        lo, hi = sid_range
        if not 0 <= lo <= hi <= self.stable_count:
            raise DeltaError(f"sid range {tuple(sid_range)} outside [0, {self.stable_count}]")
        if lo == hi:
            start = self.sid_to_rid_low(lo)
            return TupleRange(start, start)
        if hi == self.stable_count:
            return TupleRange(self.sid_to_rid_low(lo), self.visible_count)
        return TupleRange(self.sid_to_rid_low(lo), self.sid_to_rid_high(hi - 1) + 1)

    def rid_range_to_sid_range(self, rid_range: TupleRange) -> TupleRange:
        lo, hi = rid_range
        if lo >= hi:
            return TupleRange(0, 0)
        first = self.rid_to_sid(lo)
        last = self.rid_to_sid(hi - 1)
        # trailing inserts map past the last stable tuple; they ride with the last chunk
        if self.stable_count:
            first = min(first, self.stable_count - 1)
        return TupleRange(first, min(last + 1, self.stable_count))


def rid_to_sid(delta: DeltaList, rid: int) -> int:
    return delta.rid_to_sid(rid)


def sid_to_rid_low(delta: DeltaList, sid: int) -> int:
    return delta.sid_to_rid_low(sid)


def sid_to_rid_high(delta: DeltaList, sid: int) -> int:
    return delta.sid_to_rid_high(sid)


def chunk_to_rid_range(delta: DeltaList, sid_range) -> TupleRange:
    return delta.chunk_to_rid_range(TupleRange(*sid_range))


ProcessedSet = tuple  # tuple[TupleRange, ...], sorted, disjoint, coalesced


def trim_delivered(done: Iterable, candidate) -> tuple[list[TupleRange], ProcessedSet]:
    """Subtract already-produced RID ranges from ``candidate``.

    Returns the new pieces and the processed set extended with ``candidate``.
    """
    cand = TupleRange(*candidate)
    done = [TupleRange(*r) for r in done]
    pieces = []
    cursor = cand.begin
    for lo, hi in done:
        if hi <= cursor:
            continue
        if lo >= cand.end:
            break
        if lo > cursor:
            pieces.append(TupleRange(cursor, lo))
        cursor = max(cursor, hi)
    if cursor < cand.end:
        pieces.append(TupleRange(cursor, cand.end))

    merged: list[TupleRange] = []
    for r in sorted([*done, cand] if cand.begin < cand.end else done):
        if merged and r.begin <= merged[-1].end:
            merged[-1] = TupleRange(merged[-1].begin, max(merged[-1].end, r.end))
        else:
            merged.append(r)
    return pieces, tuple(merged)
