"""Road-network model, planar projection, and point-to-polyline geometry.

Everything downstream works in a local planar frame (meters east/north of
the network anchor). The anchor is the centroid of the node bounding box,
and the lat/lng <-> meters conversion is a simple equirectangular
approximation, which is accurate to well under a meter for networks a few
kilometers across.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple

import numpy as np

from .errors import DataError, FormatError

EARTH_RADIUS_M = 6_371_000.0
DEG_TO_M = EARTH_RADIUS_M * math.pi / 180.0

ROAD_LEVELS = ("highway", "arterial", "local", "supplementary")

FORWARD = "F"
BACKWARD = "B"


class GpsPoint(NamedTuple):
    lat: float
    lng: float
    t: int


class LocalPoint(NamedTuple):
    x: float
    y: float


class DirectedSegment(NamedTuple):
    """A road segment paired with a travel direction flag ('F' or 'B')."""

    seg_id: str
    direction: str

    def __str__(self):
        return f"{self.seg_id}/{self.direction}"


class Projection(NamedTuple):
    shift: float    # signed meters, positive = left of travel direction
    offset: float   # meters along the polyline from the travel origin node
    distance: float


def to_local(anchor: tuple[float, float], p: GpsPoint) -> LocalPoint:
    """Equirectangular projection of a GPS point into anchor-relative meters."""
    lat0, lng0 = anchor
    x = (p.lng - lng0) * math.cos(math.radians(lat0)) * DEG_TO_M
    y = (p.lat - lat0) * DEG_TO_M
    return LocalPoint(x, y)


def from_local(anchor: tuple[float, float], pt: LocalPoint, t: int = 0) -> GpsPoint:
    """Inverse of ``to_local``."""
    lat0, lng0 = anchor
    lat = lat0 + pt.y / DEG_TO_M
    lng = lng0 + pt.x / (math.cos(math.radians(lat0)) * DEG_TO_M)
    return GpsPoint(lat, lng, t)


@dataclass
class RoadSegment:
    seg_id: str
    level: str
    from_node: str
    to_node: str
    shape: list[LocalPoint]
    bidirectional: bool
    _geom: "_PolylineGeom | None" = field(default=None, repr=False, compare=False)

    @property
    def length(self) -> float:
        return self.geom.total_len

    @property
    def geom(self) -> "_PolylineGeom":
        # lazy, idempotent; segments are immutable after load
        if self._geom is None:
            self._geom = _PolylineGeom(self.shape)
        return self._geom


class _PolylineGeom:
    """Vectorized piece table for a polyline: starts, unit directions, lengths."""

    def __init__(self, shape: list[LocalPoint]):
        pts = np.asarray(shape, dtype=np.float64)
        if pts.shape[0] < 2:
            raise DataError("polyline needs at least 2 points")
        vecs = np.diff(pts, axis=0)
        lens = np.hypot(vecs[:, 0], vecs[:, 1])
        if np.any(lens <= 0):
            raise DataError("polyline has repeated consecutive points")
        self.starts = pts[:-1]
        self.dirs = vecs / lens[:, None]
        self.lens = lens
        self.cum = np.concatenate(([0.0], np.cumsum(lens)))
        self.total_len = float(self.cum[-1])

    def project(self, x: float, y: float) -> tuple[float, float, float]:
        """Nearest point on the polyline.

        Returns (signed_shift, offset_from_first_vertex, distance) in the
        forward (FromNode -> ToNode) frame.
        """
        dx = x - self.starts[:, 0]
        dy = y - self.starts[:, 1]
        u = np.clip(dx * self.dirs[:, 0] + dy * self.dirs[:, 1], 0.0, self.lens)
        fx = self.starts[:, 0] + u * self.dirs[:, 0]
        fy = self.starts[:, 1] + u * self.dirs[:, 1]
        d2 = (x - fx) ** 2 + (y - fy) ** 2
        k = int(np.argmin(d2))
        dist = math.sqrt(float(d2[k]))
        # left of travel positive: cross(direction, foot->point)
        cross = self.dirs[k, 0] * (y - fy[k]) - self.dirs[k, 1] * (x - fx[k])
        shift = dist if cross >= 0 else -dist
        offset = float(self.cum[k] + u[k])
        return shift, offset, dist

    def locate(self, offset: float, lateral: float) -> LocalPoint:
        """Point at a given along-polyline offset, displaced ``lateral`` meters
        to the left of the forward direction. Inverse companion of project."""
        offset = min(max(offset, 0.0), self.total_len)
        k = int(np.searchsorted(self.cum[1:-1], offset, side="right"))
        u = offset - self.cum[k]
        nx, ny = -self.dirs[k, 1], self.dirs[k, 0]  # left normal
        x = self.starts[k, 0] + u * self.dirs[k, 0] + lateral * nx
        y = self.starts[k, 1] + u * self.dirs[k, 1] + lateral * ny
        return LocalPoint(float(x), float(y))


@dataclass
class RoadNetwork:
    anchor: tuple[float, float]
    nodes: dict[str, LocalPoint]
    segments: dict[str, RoadSegment]

    def segment(self, seg_id: str) -> RoadSegment:
        return self.segments[seg_id]


def project(seg: RoadSegment, direction: str, p: LocalPoint) -> Projection:
    """Project a local point onto a directed segment.

    Offset is measured from the travel-origin node (ToNode end when
    direction is backward) so it always grows along the declared travel
    direction; shift sign flips with the direction flag.
    """
    shift, offset, dist = seg.geom.project(p.x, p.y)
    if direction == BACKWARD:
        return Projection(-shift, seg.length - offset, dist)
    return Projection(shift, offset, dist)


def directed_segments(net: RoadNetwork) -> list[DirectedSegment]:
    """One entry per one-way segment, two per bidirectional segment."""
    out = []
    for seg_id in sorted(net.segments):
        out.append(DirectedSegment(seg_id, FORWARD))
        if net.segments[seg_id].bidirectional:
            out.append(DirectedSegment(seg_id, BACKWARD))
    return out


def build_network(
    nodes: dict[str, tuple[float, float]],
    edges: Iterable[tuple[str, str, str, str, bool, list[tuple[float, float]]]],
) -> RoadNetwork:
    """Assemble a network from lat/lng node positions and edge records.

    Edge record: (seg_id, from_node, to_node, level, bidirectional, shape)
    with shape as lat/lng pairs. The anchor is the centroid of the node
    bounding box; all geometry is converted to local meters here.
    """
    if not nodes:
        raise DataError("network has no nodes")
    lats = [ll[0] for ll in nodes.values()]
    lngs = [ll[1] for ll in nodes.values()]
    anchor = ((min(lats) + max(lats)) / 2.0, (min(lngs) + max(lngs)) / 2.0)

    local_nodes = {
        nid: to_local(anchor, GpsPoint(lat, lng, 0)) for nid, (lat, lng) in nodes.items()
    }
    segments: dict[str, RoadSegment] = {}
    for seg_id, from_node, to_node, level, bidir, shape in edges:
        if seg_id in segments:
            raise DataError(f"duplicate segment id {seg_id!r}")
        for nid in (from_node, to_node):
            if nid not in local_nodes:
                raise DataError(f"segment {seg_id!r} references unknown node {nid!r}")
        if level not in ROAD_LEVELS:
            raise DataError(f"segment {seg_id!r} has unknown level {level!r}")
        pts = [to_local(anchor, GpsPoint(lat, lng, 0)) for lat, lng in shape]
        seg = RoadSegment(seg_id, level, from_node, to_node, pts, bidir)
        if seg.length <= 0:
            raise DataError(f"segment {seg_id!r} has zero length")
        segments[seg_id] = seg
    return RoadNetwork(anchor, local_nodes, segments)


def load_network(path) -> RoadNetwork:
    """Parse the line-oriented network file format.

    ``N <node_id> <lat> <lng>`` lines, then
    ``E <seg_id> <from> <to> <level> <U|B> <lat,lng;lat,lng;...>`` lines.
    ``#`` starts a comment.
    """
    nodes: dict[str, tuple[float, float]] = {}
    edges = []
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            try:
                if parts[0] == "N":
                    if len(parts) != 4:
                        raise ValueError("expected: N <node_id> <lat> <lng>")
                    nodes[parts[1]] = (float(parts[2]), float(parts[3]))
                elif parts[0] == "E":
                    if len(parts) != 7:
                        raise ValueError(
                            "expected: E <seg_id> <from> <to> <level> <U|B> <shape>"
                        )
                    if parts[5] not in ("U", "B"):
                        raise ValueError(f"bad direction flag {parts[5]!r}")
                    shape = []
                    for pair in parts[6].split(";"):
                        lat_s, lng_s = pair.split(",")
                        shape.append((float(lat_s), float(lng_s)))
                    edges.append((parts[1], parts[2], parts[3], parts[4], parts[5] == "B", shape))
                else:
                    raise ValueError(f"unknown record type {parts[0]!r}")
            except ValueError as exc:
                raise FormatError(path, line_no, str(exc)) from exc
    try:
        return build_network(nodes, edges)
    except DataError as exc:
        raise DataError(f"{path}: {exc}") from exc


def save_network(net: RoadNetwork, path) -> None:
    """Write a network back out in the load_network format (lossless floats)."""
    with open(path, "w", encoding="utf-8") as fh:
        for nid in sorted(net.nodes):
            g = from_local(net.anchor, net.nodes[nid])
            fh.write(f"N {nid} {g.lat!r} {g.lng!r}\n")
        for seg_id in sorted(net.segments):
            seg = net.segments[seg_id]
            shape = ";".join(
                f"{g.lat!r},{g.lng!r}"
                for g in (from_local(net.anchor, pt) for pt in seg.shape)
            )
            flag = "B" if seg.bidirectional else "U"
            fh.write(f"E {seg_id} {seg.from_node} {seg.to_node} {seg.level} {flag} {shape}\n")
