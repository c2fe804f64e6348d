import numpy as np
import pytest

from curbsense.detect import INSUFFICIENT
from curbsense.engine import (
    ServiceRequest,
    hourly_windows,
    plan_partitions,
    service,
    warm_up,
)
from curbsense.errors import DataError
from curbsense.geo import DirectedSegment
from curbsense.store import TimeRange

from conftest import fabricate_engine_load


def report_key(report):
    return [
        (r.rid, r.chunk, r.window, round(r.d_stat, 12), r.n, r.m, r.decision)
        for r in report.results
    ]


class TestPlan:
    def test_round_robin_7_over_2(self):
        rids = [DirectedSegment(f"e{i}", "F") for i in range(7)]
        plan = plan_partitions(rids, 2)
        assert sorted(len(v) for v in plan.partitions.values()) == [3, 4]

    def test_single_worker_gets_all(self):
        rids = [DirectedSegment(f"e{i}", "F") for i in range(5)]
        plan = plan_partitions(rids, 1)
        assert plan.partitions[0] == sorted(rids)

    def test_deterministic_and_disjoint(self):
        rids = [DirectedSegment(f"e{i}", "F") for i in range(11)]
        a = plan_partitions(rids, 3)
        b = plan_partitions(list(reversed(rids)), 3)
        assert a.partitions == b.partitions
        seen = [r for part in a.partitions.values() for r in part]
        assert sorted(seen) == sorted(rids)
        assert len(seen) == len(set(seen))

    def test_zero_workers_rejected(self):
        with pytest.raises(DataError):
            plan_partitions([], 0)


def test_hourly_windows_decomposition():
    ws = hourly_windows(TimeRange(0, 3 * 3600))
    assert ws == [TimeRange(0, 3600), TimeRange(3600, 7200), TimeRange(7200, 10800)]
    partial = hourly_windows(TimeRange(0, 5400))
    assert partial == [TimeRange(0, 3600), TimeRange(3600, 5400)]


class TestService:
    def test_report_identical_across_worker_counts(self):
        baseline, idx, cfg = fabricate_engine_load(40, trajs_per_rid=15)
        request = ServiceRequest(TimeRange(0, 3600))
        reports = []
        for workers in (1, 3):
            with warm_up(baseline, idx, workers, cfg) as eng:
                reports.append(service(eng, request))
        assert report_key(reports[0]) == report_key(reports[1])
        assert reports[0].workers == 1 and reports[1].workers == 3

    def test_every_rid_covered_once_per_window(self):
        baseline, idx, cfg = fabricate_engine_load(25, trajs_per_rid=12)
        with warm_up(baseline, idx, 2, cfg) as eng:
            report = service(eng, ServiceRequest(TimeRange(0, 3600)))
        per_rid = {}
        for r in report.results:
            per_rid.setdefault(r.rid, set()).add(r.chunk)
        assert len(per_rid) == 25
        assert all(len(chunks) == 4 for chunks in per_rid.values())

    def test_empty_range_insufficient_but_complete(self):
        baseline, idx, cfg = fabricate_engine_load(10, trajs_per_rid=8)
        with warm_up(baseline, idx, 2, cfg) as eng:
            report = service(eng, ServiceRequest(TimeRange(500_000, 503_600)))
        assert {r.rid for r in report.results} == set(baseline.rids())
        assert all(r.decision == INSUFFICIENT for r in report.results)

    def test_multi_hour_request_decomposes(self):
        baseline, idx, cfg = fabricate_engine_load(6, trajs_per_rid=12, hours=(0, 1))
        with warm_up(baseline, idx, 2, cfg) as eng:
            report = service(eng, ServiceRequest(TimeRange(0, 2 * 3600)))
        windows = {r.window for r in report.results}
        assert windows == {TimeRange(0, 3600), TimeRange(3600, 7200)}

    def test_ranked_by_illegal_impact(self):
        baseline, idx, cfg = fabricate_engine_load(30, trajs_per_rid=20)
        with warm_up(baseline, idx, 2, cfg) as eng:
            report = service(eng, ServiceRequest(TimeRange(0, 3600)))
        illegal = {}
        for r in report.results:
            illegal[r.rid] = illegal.get(r.rid, 0) + (r.decision == "illegal_parking")
        ranks = [illegal[r.rid] for r in report.results]
        # non-increasing per-rid illegal counts along the report
        assert all(a >= b for a, b in zip(ranks, ranks[1:]))
        assert max(ranks) > 0  # the fabricated displaced rids get flagged
