import math

import numpy as np
import pytest

from curbsense.geo import GpsPoint, LocalPoint, RoadNetwork, RoadSegment, build_network


@pytest.fixture
def straight_segment():
    """100 m west-east segment from (0,0) to (100,0) in local meters."""
    return RoadSegment("s1", "local", "a", "b", [LocalPoint(0, 0), LocalPoint(100, 0)], False)


@pytest.fixture
def tiny_network():
    """Two-node, one-segment network around the base anchor."""
    deg = 6_371_000.0 * math.pi / 180.0
    lat0, lng0 = 40.0, -105.0
    nodes = {
        "a": (lat0, lng0),
        "b": (lat0, lng0 + 200.0 / (math.cos(math.radians(lat0)) * deg)),
    }
    edges = [("s1", "a", "b", "local", False, [nodes["a"], nodes["b"]])]
    return build_network(nodes, edges)


def make_matched(rid, points):
    from curbsense.mapmatch import MatchedPoint, MatchedTrajectory

    return MatchedTrajectory(
        "t0#0", rid, [MatchedPoint(int(t), float(o), float(s)) for t, o, s in points]
    )


def fabricate_engine_load(n_rids, trajs_per_rid=30, hours=(0,), n_chunks=4, seed=0):
    """Directly fabricated baseline + index, heavy enough to time the engine
    without running the trajectory pipeline."""
    from curbsense.detect import BaselineModel, DetectConfig
    from curbsense.geo import DirectedSegment
    from curbsense.mapmatch import MatchedPoint, MatchedTrajectory
    from curbsense.store import build

    rng = np.random.default_rng(seed)
    cfg = DetectConfig()
    baseline = BaselineModel(cfg.chunk_len)
    mts = []
    for i in range(n_rids):
        rid = DirectedSegment(f"r{i:05d}", "F" if i % 2 == 0 else "B")
        for c in range(n_chunks):
            baseline.samples[(rid, c)] = rng.normal(-1.5, 0.5, 120)
        length = n_chunks * cfg.chunk_len
        for h in hours:
            displaced = i % 7 == 0  # a few rids carry an obstacle-like push
            for j in range(trajs_per_rid):
                t0 = h * 3600 + int(rng.integers(0, 3000))
                n_pts = 30
                offs = np.sort(rng.uniform(0, length - 1, n_pts))
                offs[1:] += np.arange(1, n_pts) * 1e-9
                shifts = rng.normal(-1.5, 0.5, n_pts)
                if displaced:
                    shifts += 2.0 * (np.abs(offs - length / 2) < 30)
                pts = [
                    MatchedPoint(t0 + k, float(offs[k]), float(shifts[k]))
                    for k in range(n_pts)
                ]
                mts.append(MatchedTrajectory(f"f{i}_{h}_{j}", rid, pts))
    return baseline, build(mts), cfg
