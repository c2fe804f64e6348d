"""Assign cleaned sub-trajectories to directed road segments.

The matcher is a continuity-aware nearest-segment voter: every point votes
for its nearest candidate segment inside a sliding window of 5 points, the
previous point's winner gets a 0.5-vote continuity bonus, and maximal runs
of points agreeing on a segment become one matched trajectory per segment
visit. Highway-level segments are never candidates, direction information
is ignored during matching (all roads treated as bidirectional), and no
speed constraint is applied; the travel direction is decided afterwards
from the offset trend.

Refinements applied downstream: average-shift distance filter, deviation
angle filter, and reverse-trajectory removal on one-way segments.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import FormatError
from .geo import (
    BACKWARD,
    FORWARD,
    DirectedSegment,
    LocalPoint,
    RoadNetwork,
    to_local,
)
from .trajprep import SubTrajectory


@dataclass
class MatchConfig:
    max_avg_shift: float = 20.0           # meters; drop runs matched far off-road
    max_deviation: float = math.pi / 3.0  # radians; drop runs crossing the road
    candidate_radius: float = 30.0        # meters; per-point candidate search radius
    window: int = 5
    continuity_bonus: float = 0.5

    def __post_init__(self):
        if min(self.max_avg_shift, self.max_deviation, self.candidate_radius) <= 0:
            raise ValueError("match thresholds must be positive")


class MatchedPoint(NamedTuple):
    t: int
    offset: float
    shift: float


@dataclass
class MatchedTrajectory:
    parent_id: str
    rid: DirectedSegment
    points: list[MatchedPoint]

    @property
    def entry_time(self) -> int:
        return self.points[0].t

    def offsets(self) -> np.ndarray:
        return np.array([p.offset for p in self.points])

    def shifts(self) -> np.ndarray:
        return np.array([p.shift for p in self.points])


class NetworkMatcher:
    """Precomputed piece table over all matchable (non-highway) segments.

    Vectorizes nearest-candidate queries for a whole point batch at once;
    built once per network and reused across trajectories.
    """

    def __init__(self, net: RoadNetwork):
        self.net = net
        self.seg_ids = sorted(
            sid for sid, seg in net.segments.items() if seg.level != "highway"
        )
        starts, dirs, lens, owner = [], [], [], []
        for si, sid in enumerate(self.seg_ids):
            g = net.segments[sid].geom
            starts.append(g.starts)
            dirs.append(g.dirs)
            lens.append(g.lens)
            owner.extend([si] * len(g.lens))
        if self.seg_ids:
            self._starts = np.concatenate(starts)
            self._dirs = np.concatenate(dirs)
            self._lens = np.concatenate(lens)
            owner_arr = np.asarray(owner)
            # piece ranges per segment, contiguous because built in order
            self._seg_first = np.searchsorted(owner_arr, np.arange(len(self.seg_ids)))

    def nearest_candidates(self, pts: np.ndarray, radius: float):
        """Per-point distances to every matchable segment.

        Args:
            pts: (P, 2) local coordinates.
        Returns:
            dist: (P, S) point-to-segment distances,
            nearest: (P,) index of nearest segment (ties -> lowest id) or -1
                     when nothing is within ``radius``.
        """
        p = pts[:, None, :]
        d = p - self._starts[None, :, :]
        u = np.clip(np.einsum("pkc,kc->pk", d, self._dirs), 0.0, self._lens)
        foot = self._starts[None, :, :] + u[:, :, None] * self._dirs[None, :, :]
        d2 = np.sum((p - foot) ** 2, axis=2)
        seg_d2 = np.minimum.reduceat(d2, self._seg_first, axis=1)
        dist = np.sqrt(seg_d2)
        nearest = np.argmin(dist, axis=1)
        nearest[dist[np.arange(len(pts)), nearest] > radius] = -1
        return dist, nearest


def match(
    sub: SubTrajectory,
    net: RoadNetwork,
    cfg: MatchConfig,
    matcher: NetworkMatcher | None = None,
) -> list[MatchedTrajectory]:
    """Match one cleaned sub-trajectory; one output per road-segment visit.

    Points without any candidate inside the search radius are dropped; runs
    that end up shorter than 2 points are dropped.
    """
    matcher = matcher or NetworkMatcher(net)
    if not matcher.seg_ids or len(sub.points) < 2:
        return []
    pts = np.array([to_local(net.anchor, p) for p in sub.points])
    dist, nearest = matcher.nearest_candidates(pts, cfg.candidate_radius)

    keep = nearest >= 0
    idx = np.nonzero(keep)[0]
    if len(idx) < 2:
        return []

    # sequential window vote with continuity bonus for the previous winner
    half = cfg.window // 2
    assigned: list[int] = []
    for j, i in enumerate(idx):
        lo, hi = max(0, j - half), min(len(idx), j + half + 1)
        votes: dict[int, float] = {}
        for k in idx[lo:hi]:
            votes[nearest[k]] = votes.get(nearest[k], 0.0) + 1.0
        if assigned:
            prev = assigned[-1]
            votes[prev] = votes.get(prev, 0.0) + cfg.continuity_bonus
        cands = np.nonzero(dist[i] <= cfg.candidate_radius)[0]
        best = min(cands, key=lambda s: (-votes.get(int(s), 0.0), dist[i, s], int(s)))
        assigned.append(int(best))

    out: list[MatchedTrajectory] = []
    run_start = 0
    for j in range(1, len(assigned) + 1):
        if j == len(assigned) or assigned[j] != assigned[run_start]:
            if j - run_start >= 2:
                seg_id = matcher.seg_ids[assigned[run_start]]
                rows = idx[run_start:j]
                out.append(_finalize_run(sub, net, seg_id, pts[rows], rows))
            run_start = j
    return out


def _finalize_run(sub, net, seg_id, local_pts, rows) -> MatchedTrajectory:
    seg = net.segments[seg_id]
    mpoints = []
    for (x, y), i in zip(local_pts, rows):
        shift, offset, _ = seg.geom.project(float(x), float(y))
        mpoints.append(MatchedPoint(sub.points[int(i)].t, offset, shift))
    mt = MatchedTrajectory(sub.sub_id, DirectedSegment(seg_id, FORWARD), mpoints)
    if travel_direction(mt) == BACKWARD:
        length = seg.length
        mt = MatchedTrajectory(
            sub.sub_id,
            DirectedSegment(seg_id, BACKWARD),
            [MatchedPoint(p.t, length - p.offset, -p.shift) for p in mpoints],
        )
    return mt


def _halves(points):
    mid = len(points) // 2
    return points[:mid], points[mid:]


def travel_direction(mt: MatchedTrajectory) -> str:
    """'F' when the mean FromNode offset of the second half exceeds the
    first half's, 'B' otherwise; ties resolve forward.

    Expects points still expressed in the forward (FromNode) frame.
    """
    first, second = _halves(mt.points)
    m1 = sum(p.offset for p in first) / len(first)
    m2 = sum(p.offset for p in second) / len(second)
    return FORWARD if m2 >= m1 else BACKWARD


def deviation_angle(mt: MatchedTrajectory) -> float:
    """Angle in [0, pi] between the half-centroid chord and the road axis.

    Computed in the curvilinear (offset, shift) frame, so the road direction
    at any offset is the +offset axis. Degenerate chords return pi, which
    forces a drop downstream.
    """
    first, second = _halves(mt.points)
    c1 = (sum(p.offset for p in first) / len(first), sum(p.shift for p in first) / len(first))
    c2 = (sum(p.offset for p in second) / len(second), sum(p.shift for p in second) / len(second))
    dx, dy = c2[0] - c1[0], c2[1] - c1[1]
    norm = math.hypot(dx, dy)
    if norm < 1e-12:
        return math.pi
    return math.acos(max(-1.0, min(1.0, dx / norm)))


def refine_distance(mt: MatchedTrajectory, cfg: MatchConfig) -> bool:
    """Keep unless the mean absolute shift exceeds the distance threshold."""
    mean_shift = float(np.mean(np.abs(mt.shifts())))
    return mean_shift <= cfg.max_avg_shift


def refine_direction(mt: MatchedTrajectory, cfg: MatchConfig) -> bool:
    """Keep unless the deviation angle strictly exceeds the threshold."""
    return deviation_angle(mt) <= cfg.max_deviation


def remove_reverse(mts: list[MatchedTrajectory], net: RoadNetwork) -> list[MatchedTrajectory]:
    """Drop backward travel on one-way segments; bidirectional segments keep
    both directions under their own directed ids. Point data untouched."""
    out = []
    for mt in mts:
        seg = net.segments[mt.rid.seg_id]
        if mt.rid.direction == BACKWARD and not seg.bidirectional:
            continue
        out.append(mt)
    return out


# -- matched file format -----------------------------------------------------
# `M <traj_id> <seg_id> <dir:F|B>` header + `Q <t> <offset> <shift>` lines.

def save_matched(mts: list[MatchedTrajectory], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for mt in mts:
            fh.write(f"M {mt.parent_id} {mt.rid.seg_id} {mt.rid.direction}\n")
            for p in mt.points:
                fh.write(f"Q {p.t} {p.offset!r} {p.shift!r}\n")


def load_matched(path) -> list[MatchedTrajectory]:
    out: list[MatchedTrajectory] = []
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            try:
                if parts[0] == "M":
                    if len(parts) != 4 or parts[3] not in (FORWARD, BACKWARD):
                        raise ValueError("expected: M <traj_id> <seg_id> <F|B>")
                    out.append(
                        MatchedTrajectory(parts[1], DirectedSegment(parts[2], parts[3]), [])
                    )
                elif parts[0] == "Q":
                    if not out:
                        raise ValueError("point line before any M header")
                    out[-1].points.append(
                        MatchedPoint(int(parts[1]), float(parts[2]), float(parts[3]))
                    )
                else:
                    raise ValueError(f"unknown record type {parts[0]!r}")
            except ValueError as exc:
                raise FormatError(path, line_no, str(exc)) from exc
    return out
