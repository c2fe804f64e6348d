import math

import numpy as np
import pytest

from curbsense.errors import DataError, FormatError
from curbsense import geo
from curbsense.geo import (
    DirectedSegment,
    GpsPoint,
    LocalPoint,
    RoadSegment,
    build_network,
    directed_segments,
    from_local,
    load_network,
    project,
    save_network,
    to_local,
)

ANCHOR = (40.0, -105.0)


def test_to_local_origin():
    assert to_local(ANCHOR, GpsPoint(40.0, -105.0, 0)) == (0.0, 0.0)


def test_to_local_one_degree_north():
    # independent evaluation of R * pi / 180
    expected_y = 6_371_000.0 * math.pi / 180.0
    p = to_local(ANCHOR, GpsPoint(41.0, -105.0, 0))
    assert p.x == 0.0
    assert p.y == pytest.approx(expected_y, abs=1e-6)
    assert p.y == pytest.approx(111_194.9266, abs=1e-3)


def test_local_round_trip_within_10km():
    rng = np.random.default_rng(7)
    for _ in range(200):
        x, y = rng.uniform(-10_000, 10_000, size=2)
        g = from_local(ANCHOR, LocalPoint(x, y))
        back = to_local(ANCHOR, g)
        assert abs(back.x - x) < 1e-6
        assert abs(back.y - y) < 1e-6


class TestProject:
    def test_axis_aligned_left(self, straight_segment):
        pr = project(straight_segment, "F", LocalPoint(50, 3))
        assert pr.shift == pytest.approx(3.0)
        assert pr.offset == pytest.approx(50.0)
        assert pr.distance == pytest.approx(3.0)

    def test_sign_symmetry(self, straight_segment):
        pr = project(straight_segment, "F", LocalPoint(50, -4))
        assert pr.shift == pytest.approx(-4.0)
        assert pr.offset == pytest.approx(50.0)

    def test_backward_flips_shift_and_rebases_offset(self, straight_segment):
        pr = project(straight_segment, "B", LocalPoint(50, 3))
        assert pr.shift == pytest.approx(-3.0)
        assert pr.offset == pytest.approx(50.0)
        pr2 = project(straight_segment, "B", LocalPoint(30, 3))
        assert pr2.offset == pytest.approx(70.0)

    def test_projection_of_foot_is_on_the_line(self, straight_segment):
        rng = np.random.default_rng(3)
        for _ in range(50):
            p = LocalPoint(rng.uniform(-20, 120), rng.uniform(-30, 30))
            pr = project(straight_segment, "F", p)
            foot = straight_segment.geom.locate(pr.offset, 0.0)
            again = project(straight_segment, "F", foot)
            assert abs(again.shift) < 1e-9

    def test_forward_backward_complementarity(self):
        seg = RoadSegment(
            "z", "local", "a", "b",
            [LocalPoint(0, 0), LocalPoint(40, 10), LocalPoint(90, -5), LocalPoint(130, 30)],
            True,
        )
        rng = np.random.default_rng(11)
        for _ in range(100):
            p = LocalPoint(rng.uniform(-10, 140), rng.uniform(-40, 40))
            fwd = project(seg, "F", p)
            bwd = project(seg, "B", p)
            assert fwd.shift == pytest.approx(-bwd.shift, abs=1e-6)
            assert fwd.offset + bwd.offset == pytest.approx(seg.length, abs=1e-6)

    def test_nearest_point_optimality_against_densified_oracle(self):
        seg = RoadSegment(
            "z", "local", "a", "b",
            [LocalPoint(0, 0), LocalPoint(30, 20), LocalPoint(70, 15), LocalPoint(100, 40)],
            False,
        )
        # brute force: sample the polyline every centimeter
        dense = []
        for a, b in zip(seg.shape[:-1], seg.shape[1:]):
            n = int(math.hypot(b.x - a.x, b.y - a.y) * 100) + 1
            ts = np.linspace(0, 1, n)
            dense.append(np.column_stack([a.x + ts * (b.x - a.x), a.y + ts * (b.y - a.y)]))
        dense = np.vstack(dense)
        rng = np.random.default_rng(5)
        for _ in range(40):
            p = np.array([rng.uniform(-10, 110), rng.uniform(-20, 60)])
            pr = project(seg, "F", LocalPoint(*p))
            brute = float(np.min(np.hypot(dense[:, 0] - p[0], dense[:, 1] - p[1])))
            assert pr.distance <= brute + 1e-9
            assert pr.distance == pytest.approx(brute, abs=1e-3)


class TestDirectedSegments:
    def test_counts(self):
        deg = 6_371_000.0 * math.pi / 180.0
        nodes = {f"n{i}": (40.0 + i * 100 / deg, -105.0) for i in range(6)}
        shapes = {k: v for k, v in nodes.items()}
        edges = []
        for i, bidir in enumerate([False, False, False, True, True]):
            a, b = f"n{i}", f"n{i + 1}"
            edges.append((f"e{i}", a, b, "local", bidir, [shapes[a], shapes[b]]))
        net = build_network(nodes, edges)
        rids = directed_segments(net)
        assert len(rids) == 7  # 3 one-way + 2 bidirectional
        assert DirectedSegment("e3", "B") in rids
        assert DirectedSegment("e0", "B") not in rids

    def test_single_unidirectional(self, tiny_network):
        assert directed_segments(tiny_network) == [DirectedSegment("s1", "F")]


class TestNetworkFile:
    def test_load_two_node_file(self, tmp_path):
        path = tmp_path / "net.txt"
        path.write_text(
            "# comment\n"
            "N a 40.0 -105.0\n"
            "N b 40.001 -105.0\n"
            "E s1 a b local U 40.0,-105.0;40.001,-105.0\n"
        )
        net = load_network(path)
        assert len(net.segments) == 1
        assert net.segments["s1"].length == pytest.approx(111.19, abs=0.01)

    def test_unknown_node_reported(self, tmp_path):
        path = tmp_path / "net.txt"
        path.write_text(
            "N a 40.0 -105.0\nE s1 a missing local U 40.0,-105.0;40.001,-105.0\n"
        )
        with pytest.raises(DataError, match="missing"):
            load_network(path)

    def test_parse_error_carries_line_number(self, tmp_path):
        path = tmp_path / "net.txt"
        path.write_text("N a 40.0 -105.0\nE broken\n")
        with pytest.raises(FormatError, match=":2:"):
            load_network(path)

    def test_zero_length_segment_rejected(self, tmp_path):
        path = tmp_path / "net.txt"
        path.write_text(
            "N a 40.0 -105.0\nN b 40.0 -105.0\nE s1 a b local U 40.0,-105.0;40.0,-105.0\n"
        )
        with pytest.raises(DataError):
            load_network(path)

    def test_synthetic_grid_round_trips(self, tmp_path):
        from curbsense.synth import SynthConfig, gen_network

        net = gen_network(SynthConfig(grid_rows=4, grid_cols=4, spacing_m=120.0))
        path = tmp_path / "grid.txt"
        save_network(net, path)
        net2 = load_network(path)
        assert sorted(net2.segments) == sorted(net.segments)
        assert net2.anchor == pytest.approx(net.anchor, abs=1e-12)
        for sid in net.segments:
            a, b = net.segments[sid], net2.segments[sid]
            assert a.level == b.level and a.bidirectional == b.bidirectional
            assert a.from_node == b.from_node and a.to_node == b.to_node
            for p, q in zip(a.shape, b.shape):
                assert abs(p.x - q.x) < 1e-6 and abs(p.y - q.y) < 1e-6
