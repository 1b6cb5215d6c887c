import pytest
from hypothesis import given, settings, strategies as st

from scanbench.delta import (Delete, DeltaError, DeltaList, Insert, chunk_to_rid_range, rid_to_sid,
                             sid_to_rid_high, sid_to_rid_low, trim_delivered)
from scanbench.storage import TupleRange
from oracles import high, low, merged_keys, rids_of_sid_range

# 6 stable tuples, SID 1 deleted, two tuples inserted before SID 3
SETUP_S = DeltaList(6, (Delete(1), Insert(3, 2)))


@st.composite
def delta_lists(draw, max_stable=30):
    n = draw(st.integers(1, max_stable))
    deletes = draw(st.sets(st.integers(0, n - 1), max_size=n))
    inserts = draw(st.lists(st.tuples(st.integers(0, n), st.integers(1, 3)), max_size=6))
    return DeltaList(n, tuple(Delete(s) for s in deletes) + tuple(Insert(s, c) for s, c in inserts))


def test_setup_s_matches_merge_oracle():
    assert merged_keys(SETUP_S) == [0, 2, 3, 3, 3, 4, 5]
    assert SETUP_S.visible_count == 7


def test_rid_to_sid_examples():
    assert rid_to_sid(DeltaList.empty(10), 7) == 7
    assert rid_to_sid(SETUP_S, 1) == 2
    assert rid_to_sid(SETUP_S, 2) == 3


def test_sid_to_rid_examples():
    empty = DeltaList.empty(10)
    assert sid_to_rid_low(empty, 4) == 4
    assert sid_to_rid_low(SETUP_S, 3) == 2
    assert sid_to_rid_low(SETUP_S, 1) == 1
    assert sid_to_rid_high(empty, 4) == 4
    assert sid_to_rid_high(SETUP_S, 3) == 4
    assert sid_to_rid_high(SETUP_S, 0) == 0


def test_chunk_to_rid_range_examples():
    assert chunk_to_rid_range(DeltaList.empty(300), (100, 200)) == (100, 200)
    assert chunk_to_rid_range(SETUP_S, (3, 6)) == (2, 7)
    assert chunk_to_rid_range(SETUP_S, (0, 3)) == (0, 2)


def test_trailing_inserts_ride_with_last_range():
    d = DeltaList(4, (Insert(4, 3),))
    assert chunk_to_rid_range(d, (2, 4)) == (2, 7)
    assert rid_to_sid(d, 6) == 4


def test_trim_delivered_examples():
    assert trim_delivered((), (0, 10)) == ([(0, 10)], ((0, 10),))
    pieces, done = trim_delivered(((0, 10),), (5, 15))
    assert pieces == [(10, 15)] and done == ((0, 15),)
    pieces, done = trim_delivered(((0, 5), (8, 12)), (3, 10))
    assert pieces == [(5, 8)] and done == ((0, 12),)


def test_bounds_and_validation():
    with pytest.raises(DeltaError):
        rid_to_sid(SETUP_S, 7)
    with pytest.raises(DeltaError):
        sid_to_rid_low(SETUP_S, 7)
    with pytest.raises(DeltaError):
        DeltaList(3, (Delete(3),))
    with pytest.raises(DeltaError):
        DeltaList(3, (Delete(1), Delete(1)))
    with pytest.raises(DeltaError):
        DeltaList(3, (Insert(1, 0),))
    with pytest.raises(DeltaError):
        DeltaList(3, (Insert(4),))


@given(delta_lists())
def test_translation_matches_merge_oracle(d):
    keys = merged_keys(d)
    assert d.visible_count == len(keys)
    for rid, sid in enumerate(keys):
        assert d.rid_to_sid(rid) == sid
    for sid in range(d.stable_count + 1):
        assert d.sid_to_rid_low(sid) == low(keys, sid)
        if sid < d.stable_count:
            assert d.sid_to_rid_high(sid) == high(keys, sid)


@given(delta_lists())
def test_round_trip_and_ordering(d):
    deleted = {e.sid for e in d.entries if e.kind == "delete"}
    prev_low = prev_high = -1
    for sid in range(d.stable_count):
        lo, hi = d.sid_to_rid_low(sid), d.sid_to_rid_high(sid)
        if sid not in deleted:
            assert d.rid_to_sid(hi) == sid
            # the low variant lands on the first inserted tuple keyed here, if any
            assert d.rid_to_sid(lo) == sid
        assert lo <= hi + 1
        assert lo >= prev_low and hi >= prev_high
        prev_low, prev_high = lo, hi


@given(delta_lists(), st.data())
def test_chunk_to_rid_range_is_exact(d, data):
    keys = merged_keys(d)
    lo = data.draw(st.integers(0, d.stable_count - 1))
    hi = data.draw(st.integers(lo + 1, d.stable_count))
    rng = d.chunk_to_rid_range(TupleRange(lo, hi))
    want = rids_of_sid_range(keys, lo, hi, d.stable_count)
    assert set(range(*rng)) == want


@given(st.lists(st.tuples(st.integers(0, 40), st.integers(0, 15)), max_size=12))
def test_trim_never_repeats_a_position(cands):
    done, seen = (), set()
    for a, w in cands:
        pieces, done = trim_delivered(done, (a, a + w))
        got = [x for p in pieces for x in range(*p)]
        assert len(got) == len(set(got))
        assert not set(got) & seen
        assert set(got) == set(range(a, a + w)) - seen
        seen |= set(got)
        assert {x for r in done for x in range(*r)} == seen
        assert all(r1.end < r2.begin for r1, r2 in zip(done, done[1:]))


@settings(max_examples=200)
@given(delta_lists(), st.integers(1, 7), st.data())
def test_any_chunk_order_delivers_range_once(d, chunk, data):
    keys = merged_keys(d)
    v = d.visible_count
    if v == 0:
        return
    a = data.draw(st.integers(0, v - 1))
    b = data.draw(st.integers(a + 1, v))
    sids = d.rid_range_to_sid_range(TupleRange(a, b))
    chunks = list(range(sids.begin // chunk, -(-sids.end // chunk)))
    order = data.draw(st.permutations(chunks))
    done, out = (), []
    for c in order:
        sr = TupleRange(c * chunk, min((c + 1) * chunk, d.stable_count))
        cand = d.chunk_to_rid_range(sr).intersect(TupleRange(a, b))
        pieces, done = trim_delivered(done, cand)
        out.extend(x for p in pieces for x in range(*p))
    assert sorted(out) == list(range(a, b))
    assert all(0 <= keys[r] <= d.stable_count for r in out)
