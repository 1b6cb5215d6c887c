"""Slow, obviously-correct reference implementations used by the tests."""

from scanbench.delta import DeltaList


def merged_keys(delta: DeltaList) -> list[int]:
    """Materialize the visible stream; entry ``rid`` is the SID that rid translates to."""
    inserts = {}
    deleted = set()
    for e in delta.entries:
        if e.kind == "insert":
            inserts[e.sid] = inserts.get(e.sid, 0) + e.count
        else:
            deleted.add(e.sid)
    keys = []
    for sid in range(delta.stable_count + 1):
        keys.extend([sid] * inserts.get(sid, 0))
        if sid < delta.stable_count and sid not in deleted:
            keys.append(sid)
    return keys


def low(keys, sid) -> int:
    return next((r for r, k in enumerate(keys) if k >= sid), len(keys))


def high(keys, sid) -> int:
    return max((r for r, k in enumerate(keys) if k <= sid), default=-1)


def rids_of_sid_range(keys, lo, hi, stable_count) -> set[int]:
    """RIDs whose stable key lies in ``[lo, hi)``; trailing inserts ride with the last range."""
    return {r for r, k in enumerate(keys) if lo <= k < hi or (hi == stable_count and k == hi)}


def tuple_pages(lo, hi, tpp) -> list[int]:
    return sorted({t // tpp for t in range(lo, hi)})
