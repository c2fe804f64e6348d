import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from curbsense.errors import DataError
from curbsense.geo import DirectedSegment
from curbsense.mapmatch import MatchedPoint, MatchedTrajectory
from curbsense.store import RoadTimeIndex, TimeRange, build, load, query, save

RIDS = [DirectedSegment(f"e{i}", d) for i in range(5) for d in ("F", "B")]


def mt(rid, entry, ident="x"):
    return MatchedTrajectory(
        f"{ident}{entry}", rid, [MatchedPoint(entry, 0.0, 1.0), MatchedPoint(entry + 4, 5.0, 1.2)]
    )


def random_corpus(rng, n):
    return [
        mt(RIDS[rng.integers(len(RIDS))], int(rng.integers(0, 5000)), f"t{i}_")
        for i in range(n)
    ]


class TestBuild:
    def test_empty(self):
        idx = build([])
        assert idx.rids() == []

    def test_sorted_by_entry_time(self):
        rid = RIDS[0]
        idx = build([mt(rid, 30), mt(rid, 10), mt(rid, 20)])
        assert [m.entry_time for m in idx.entries[rid]] == [10, 20, 30]

    def test_order_insensitive(self):
        rng = np.random.default_rng(0)
        corpus = random_corpus(rng, 100)
        a = build(corpus)
        perm = [corpus[i] for i in rng.permutation(len(corpus))]
        b = build(perm)
        assert a.rids() == b.rids()
        for rid in a.rids():
            assert [(m.parent_id, m.points) for m in a.entries[rid]] == [
                (m.parent_id, m.points) for m in b.entries[rid]
            ]


class TestQuery:
    def test_full_range_returns_rid_subset(self):
        rng = np.random.default_rng(1)
        corpus = random_corpus(rng, 200)
        idx = build(corpus)
        for rid in idx.rids():
            got = query(idx, rid, TimeRange(0, 10_000))
            want = [m for m in corpus if m.rid == rid]
            assert len(got) == len(want)
            assert {m.parent_id for m in got} == {m.parent_id for m in want}

    def test_empty_range_result(self):
        idx = build([mt(RIDS[0], 100)])
        assert query(idx, RIDS[0], TimeRange(500, 600)) == []

    def test_boundary_half_open(self):
        idx = build([mt(RIDS[0], 100)])
        assert len(query(idx, RIDS[0], TimeRange(50, 100))) == 0  # end exclusive
        assert len(query(idx, RIDS[0], TimeRange(100, 101))) == 1  # start inclusive

    def test_unknown_rid_empty(self):
        idx = build([mt(RIDS[0], 100)])
        assert query(idx, DirectedSegment("nope", "F"), TimeRange(0, 1000)) == []

    def test_invalid_range(self):
        idx = build([mt(RIDS[0], 100)])
        with pytest.raises(DataError):
            query(idx, RIDS[0], TimeRange(10, 10))

    def test_500_trajectories_100_ranges_vs_linear_scan(self):
        rng = np.random.default_rng(2)
        corpus = random_corpus(rng, 500)
        idx = build(corpus)
        for _ in range(100):
            rid = RIDS[rng.integers(len(RIDS))]
            a = int(rng.integers(0, 5000))
            b = a + int(rng.integers(1, 2000))
            got = query(idx, rid, TimeRange(a, b))
            oracle = sorted(
                (m for m in corpus if m.rid == rid and a <= m.entry_time < b),
                key=lambda m: (m.entry_time, m.parent_id, m.points[0]),
            )
            assert [m.parent_id for m in got] == [m.parent_id for m in oracle]
            assert [m.entry_time for m in got] == sorted(m.entry_time for m in got)

    @settings(max_examples=60, deadline=None)
    @given(
        entries=st.lists(st.integers(0, 300), max_size=40),
        start=st.integers(0, 300),
        width=st.integers(1, 150),
    )
    def test_property_query_equals_filter(self, entries, start, width):
        rid = RIDS[0]
        corpus = [mt(rid, e, f"p{i}_") for i, e in enumerate(entries)]
        idx = build(corpus)
        got = query(idx, rid, TimeRange(start, start + width))
        assert sorted(m.parent_id for m in got) == sorted(
            m.parent_id for m in corpus if start <= m.entry_time < start + width
        )


class TestPersistence:
    def test_empty_round_trip(self, tmp_path):
        path = tmp_path / "i.bin"
        save(build([]), path)
        assert load(path).rids() == []

    def test_round_trip_and_byte_identical_resave(self, tmp_path):
        rng = np.random.default_rng(3)
        idx = build(random_corpus(rng, 1000))
        p1, p2 = tmp_path / "a.bin", tmp_path / "b.bin"
        save(idx, p1)
        idx2 = load(p1)
        save(idx2, p2)
        assert p1.read_bytes() == p2.read_bytes()
        assert idx2.rids() == idx.rids()
        for rid in idx.rids():
            assert [(m.parent_id, m.points) for m in idx.entries[rid]] == [
                (m.parent_id, m.points) for m in idx2.entries[rid]
            ]

    def test_corrupted_magic(self, tmp_path):
        path = tmp_path / "bad.bin"
        path.write_bytes(b"GARBAGE!")
        with pytest.raises(DataError, match="magic"):
            load(path)

    def test_truncated(self, tmp_path):
        path = tmp_path / "i.bin"
        save(build([mt(RIDS[0], 5)]), path)
        path.write_bytes(path.read_bytes()[:-6])
        with pytest.raises(DataError, match="truncated"):
            load(path)
