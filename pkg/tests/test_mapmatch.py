import math

import numpy as np
import pytest

from curbsense.geo import DirectedSegment, LocalPoint, build_network, from_local
from curbsense.mapmatch import (
    MatchConfig,
    MatchedPoint,
    MatchedTrajectory,
    NetworkMatcher,
    deviation_angle,
    load_matched,
    match,
    refine_direction,
    refine_distance,
    remove_reverse,
    save_matched,
    travel_direction,
)
from curbsense.trajprep import SubTrajectory

from conftest import make_matched

DEG = 6_371_000.0 * math.pi / 180.0
LAT0, LNG0 = 40.0, -105.0


def latlng(x, y):
    return (LAT0 + y / DEG, LNG0 + x / (math.cos(math.radians(LAT0)) * DEG))


def simple_net(edges_xy, bidir=None, levels=None):
    """Build a network from {seg_id: [(x, y), ...]} local-meter polylines."""
    nodes = {}
    edges = []
    for i, (sid, pts) in enumerate(sorted(edges_xy.items())):
        a, b = f"{sid}_a", f"{sid}_b"
        nodes[a] = latlng(*pts[0])
        nodes[b] = latlng(*pts[-1])
        edges.append(
            (
                sid,
                a,
                b,
                (levels or {}).get(sid, "local"),
                (bidir or {}).get(sid, False),
                [latlng(*p) for p in pts],
            )
        )
    return build_network(nodes, edges)


def sub_from_xy(net, xy_pts, dt=2, t0=0):
    pts = [from_local(net.anchor, LocalPoint(*p), t0 + i * dt) for i, p in enumerate(xy_pts)]
    return SubTrajectory("t0", 0, pts)


class TestMatch:
    def test_points_near_lone_segment(self):
        net = simple_net({"s1": [(0, 0), (200, 0)]})
        sub = sub_from_xy(net, [(10 + 8 * i, 3) for i in range(10)])
        out = match(sub, net, MatchConfig())
        assert len(out) == 1
        assert out[0].rid == DirectedSegment("s1", "F")
        assert len(out[0].points) == 10
        assert all(abs(p.shift - 3) < 0.01 for p in out[0].points)

    def test_tie_broken_by_smaller_segment_id(self):
        net = simple_net({"a2": [(0, 5), (200, 5)], "a1": [(0, -5), (200, -5)]})
        sub = sub_from_xy(net, [(10 + 8 * i, 0) for i in range(8)])
        out = match(sub, net, MatchConfig())
        assert len(out) == 1
        assert out[0].rid.seg_id == "a1"

    def test_highway_never_candidate(self):
        net = simple_net(
            {"hw": [(0, 0), (200, 0)], "loc": [(0, 12), (200, 12)]},
            levels={"hw": "highway"},
        )
        sub = sub_from_xy(net, [(10 + 8 * i, 1) for i in range(8)])
        out = match(sub, net, MatchConfig())
        assert out and out[0].rid.seg_id == "loc"

    def test_no_candidate_points_dropped(self):
        net = simple_net({"s1": [(0, 0), (200, 0)]})
        sub = sub_from_xy(net, [(10, 500), (18, 500), (26, 500)])
        assert match(sub, net, MatchConfig()) == []

    def test_grid_ground_truth_recovery(self):
        from curbsense.synth import SynthConfig, gen_network, gen_trajectories
        from curbsense.geo import directed_segments

        cfg = SynthConfig(seed=4, grid_rows=4, grid_cols=4, spacing_m=300.0, gps_sigma=2.0,
                          reverse_rider_frac=0.0)
        net = gen_network(cfg)
        matcher = NetworkMatcher(net)
        mcfg = MatchConfig()
        total = correct = 0
        for rid in directed_segments(net)[:12]:
            trajs, truths = gen_trajectories(net, rid, 5, cfg, key=11)
            for raw, truth in zip(trajs, truths):
                sub = SubTrajectory(raw.traj_id, 0, raw.points)
                for mt in match(sub, net, mcfg, matcher):
                    total += len(mt.points)
                    if mt.rid.seg_id == truth.rid.seg_id:
                        correct += len(mt.points)
        assert total > 500
        assert correct / total >= 0.95

    def test_deterministic(self):
        net = simple_net({"s1": [(0, 0), (200, 0)], "s2": [(0, 18), (200, 18)]})
        sub = sub_from_xy(net, [(10 + 8 * i, 9 + (i % 3)) for i in range(12)])
        a = match(sub, net, MatchConfig())
        b = match(sub, net, MatchConfig())
        assert [(m.rid, m.points) for m in a] == [(m.rid, m.points) for m in b]


class TestRefinements:
    cfg = MatchConfig()
    rid = DirectedSegment("s1", "F")

    def test_zero_shift_kept(self):
        mt = make_matched(self.rid, [(0, 0, 0), (2, 10, 0), (4, 20, 0), (6, 30, 0)])
        assert refine_distance(mt, self.cfg)

    def test_constant_25m_dropped(self):
        mt = make_matched(self.rid, [(0, 0, 25), (2, 10, -25), (4, 20, 25)])
        assert not refine_distance(mt, self.cfg)

    def test_boundary_19_9_kept(self):
        mt = make_matched(self.rid, [(0, 0, 19.9), (2, 10, 19.9)])
        assert refine_distance(mt, self.cfg)

    def test_parallel_angle_zero(self):
        mt = make_matched(self.rid, [(0, 0, 1), (2, 10, 1), (4, 20, 1), (6, 30, 1)])
        assert deviation_angle(mt) == pytest.approx(0.0, abs=1e-9)

    def test_perpendicular_angle(self):
        mt = make_matched(self.rid, [(0, 50, -5), (2, 50, 0), (4, 50, 5)])
        assert deviation_angle(mt) == pytest.approx(math.pi / 2, abs=1e-9)

    def test_thirty_degree_crossing(self):
        # constructed geometry: offsets advance cos(30 deg), shifts sin(30 deg)
        step_o, step_s = math.cos(math.pi / 6), math.sin(math.pi / 6)
        pts = [(2 * i, 10 + i * step_o, -3 + i * step_s) for i in range(11)]
        mt = make_matched(self.rid, pts)
        assert deviation_angle(mt) == pytest.approx(math.pi / 6, abs=1e-6)

    def test_degenerate_returns_pi(self):
        mt = make_matched(self.rid, [(0, 10, 2), (2, 10, 2)])
        assert deviation_angle(mt) == pytest.approx(math.pi)
        assert not refine_direction(mt, self.cfg)

    def test_direction_filter_boundary(self):
        # an angle exactly equal to the threshold is kept (strict inequality)
        step_o, step_s = math.cos(math.pi / 3), math.sin(math.pi / 3)
        pts = [(2 * i, 10 + i * step_o, i * step_s) for i in range(8)]
        mt = make_matched(self.rid, pts)
        angle = deviation_angle(mt)
        assert angle == pytest.approx(math.pi / 3, abs=1e-9)
        at_threshold = MatchConfig(max_deviation=angle)
        assert refine_direction(mt, at_threshold)
        just_below = MatchConfig(max_deviation=angle - 1e-12)
        assert not refine_direction(mt, just_below)

    def test_perpendicular_dropped(self):
        mt = make_matched(self.rid, [(0, 50, -5), (2, 50, 5)])
        assert not refine_direction(mt, self.cfg)


class TestDirection:
    rid = DirectedSegment("s1", "F")

    def test_increasing_offsets_forward(self):
        mt = make_matched(self.rid, [(0, 10, 0), (2, 20, 0), (4, 30, 0), (6, 40, 0)])
        assert travel_direction(mt) == "F"

    def test_decreasing_offsets_backward(self):
        mt = make_matched(self.rid, [(0, 40, 0), (2, 30, 0), (4, 20, 0), (6, 10, 0)])
        assert travel_direction(mt) == "B"

    def test_tie_forward(self):
        mt = make_matched(self.rid, [(0, 20, 0), (2, 20, 0)])
        assert travel_direction(mt) == "F"

    def test_noise_free_reverse_riders_identified(self):
        from curbsense.synth import SynthConfig, gen_network, gen_trajectories

        cfg = SynthConfig(
            seed=9, grid_rows=2, grid_cols=2, spacing_m=300.0,
            gps_sigma=0.0, wander_sigma=0.0, lane_sigma=0.0,
            reverse_rider_frac=0.5,
        )
        net = gen_network(cfg)
        rid = DirectedSegment(sorted(net.segments)[0], "F")
        trajs, truths = gen_trajectories(net, rid, 40, cfg, key=3)
        mcfg = MatchConfig()
        hits = n = 0
        for raw, truth in zip(trajs, truths):
            out = match(SubTrajectory(raw.traj_id, 0, raw.points), net, mcfg)
            assert len(out) == 1
            n += 1
            hits += out[0].rid.direction == truth.travel.direction
        assert n == 40
        assert hits == n  # 100% on noise-free data


class TestRemoveReverse:
    def test_one_way_reverse_removed(self):
        net = simple_net({"s1": [(0, 0), (200, 0)]})
        fwd = [make_matched(DirectedSegment("s1", "F"), [(0, 0, 0), (2, 10, 0)]) for _ in range(9)]
        back = [make_matched(DirectedSegment("s1", "B"), [(0, 0, 0), (2, 10, 0)])]
        out = remove_reverse(fwd + back, net)
        assert len(out) == 9
        assert all(m.rid.direction == "F" for m in out)

    def test_bidirectional_keeps_both(self):
        net = simple_net({"s1": [(0, 0), (200, 0)]}, bidir={"s1": True})
        mts = [
            make_matched(DirectedSegment("s1", "F"), [(0, 0, 0), (2, 10, 0)]) for _ in range(5)
        ] + [
            make_matched(DirectedSegment("s1", "B"), [(0, 0, 0), (2, 10, 0)]) for _ in range(5)
        ]
        out = remove_reverse(mts, net)
        assert len(out) == 10
        assert {m.rid for m in out} == {DirectedSegment("s1", "F"), DirectedSegment("s1", "B")}

    def test_empty(self):
        net = simple_net({"s1": [(0, 0), (200, 0)]})
        assert remove_reverse([], net) == []

    def test_never_alters_points(self):
        net = simple_net({"s1": [(0, 0), (200, 0)]}, bidir={"s1": True})
        mt = make_matched(DirectedSegment("s1", "B"), [(0, 40, -1), (2, 30, -1)])
        out = remove_reverse([mt], net)
        assert out[0].points == mt.points


def test_matched_file_round_trip(tmp_path):
    mts = [
        make_matched(DirectedSegment("s1", "F"), [(0, 0.5, 1.25), (2, 10.75, -0.5)]),
        make_matched(DirectedSegment("s2", "B"), [(5, 3.0, 0.0), (9, 13.0, 2.0)]),
    ]
    path = tmp_path / "m.txt"
    save_matched(mts, path)
    back = load_matched(path)
    assert [(m.parent_id, m.rid, m.points) for m in back] == [
        (m.parent_id, m.rid, m.points) for m in mts
    ]
