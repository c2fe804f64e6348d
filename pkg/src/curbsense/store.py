"""Inverted index: directed segment -> time-sorted matched trajectories.

Entry time is the first point's timestamp. Time ranges are half-open
[start, end) everywhere, which keeps hourly windows from double-counting
trajectories on the boundary. The index is immutable after build and safe
for concurrent reads.
"""

from __future__ import annotations

import struct
from bisect import bisect_left
from dataclasses import dataclass, field
from typing import NamedTuple

from .errors import DataError
from .geo import DirectedSegment
from .mapmatch import MatchedPoint, MatchedTrajectory

MAGIC = b"CSIX1"
VERSION = 1


class TimeRange(NamedTuple):
    start: int  # inclusive, seconds
    end: int    # exclusive, seconds

    def validate(self) -> "TimeRange":
        if self.start >= self.end:
            raise DataError(f"empty time range [{self.start}, {self.end})")
        return self


@dataclass
class RoadTimeIndex:
    entries: dict[DirectedSegment, list[MatchedTrajectory]] = field(default_factory=dict)
    _times: dict[DirectedSegment, list[int]] = field(default_factory=dict, repr=False)

    def rids(self) -> list[DirectedSegment]:
        return sorted(self.entries)

    def restrict(self, rids) -> "RoadTimeIndex":
        """Shallow sub-index over a subset of directed segments."""
        keep = set(rids)
        return RoadTimeIndex(
            {r: v for r, v in self.entries.items() if r in keep},
            {r: v for r, v in self._times.items() if r in keep},
        )


def build(mts: list[MatchedTrajectory]) -> RoadTimeIndex:
    """Build the index; insertion order never affects the result."""
    grouped: dict[DirectedSegment, list[MatchedTrajectory]] = {}
    for mt in mts:
        if not mt.points:
            raise DataError(f"trajectory {mt.parent_id} has no points")
        grouped.setdefault(mt.rid, []).append(mt)
    idx = RoadTimeIndex()
    for rid, group in grouped.items():
        group.sort(key=lambda m: (m.entry_time, m.parent_id, m.points[0]))
        idx.entries[rid] = group
        idx._times[rid] = [m.entry_time for m in group]
    return idx


def query(idx: RoadTimeIndex, rid: DirectedSegment, rng: TimeRange) -> list[MatchedTrajectory]:
    """Trajectories with start <= entry_time < end; unknown rid -> empty."""
    rng.validate()
    times = idx._times.get(rid)
    if not times:
        return []
    lo = bisect_left(times, rng.start)
    hi = bisect_left(times, rng.end)
    return idx.entries[rid][lo:hi]


def save(idx: RoadTimeIndex, path) -> None:
    """Deterministic binary dump: magic, version, sorted entries."""
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<H", VERSION))
        rids = idx.rids()
        fh.write(struct.pack("<I", len(rids)))
        for rid in rids:
            _write_str(fh, rid.seg_id)
            fh.write(rid.direction.encode("ascii"))
            group = idx.entries[rid]
            fh.write(struct.pack("<I", len(group)))
            for mt in group:
                _write_str(fh, mt.parent_id)
                fh.write(struct.pack("<I", len(mt.points)))
                for p in mt.points:
                    fh.write(struct.pack("<qdd", p.t, p.offset, p.shift))


def load(path) -> RoadTimeIndex:
    with open(path, "rb") as fh:
        magic = fh.read(len(MAGIC))
        if magic != MAGIC:
            raise DataError(f"{path}: not an index file (magic {magic!r})")
        (version,) = _unpack(fh, "<H", path)
        if version != VERSION:
            raise DataError(f"{path}: unsupported index version {version}")
        (n_rids,) = _unpack(fh, "<I", path)
        idx = RoadTimeIndex()
        for _ in range(n_rids):
            seg_id = _read_str(fh, path)
            direction = fh.read(1).decode("ascii")
            if direction not in ("F", "B"):
                raise DataError(f"{path}: corrupt direction flag {direction!r}")
            rid = DirectedSegment(seg_id, direction)
            (n_trajs,) = _unpack(fh, "<I", path)
            group = []
            for _ in range(n_trajs):
                parent = _read_str(fh, path)
                (n_pts,) = _unpack(fh, "<I", path)
                pts = [
                    MatchedPoint(t, off, sh)
                    for t, off, sh in (_unpack(fh, "<qdd", path) for _ in range(n_pts))
                ]
                group.append(MatchedTrajectory(parent, rid, pts))
            idx.entries[rid] = group
            idx._times[rid] = [m.entry_time for m in group]
        return idx


def _write_str(fh, s: str) -> None:
    raw = s.encode("utf-8")
    fh.write(struct.pack("<H", len(raw)))
    fh.write(raw)


def _read_str(fh, path) -> str:
    (n,) = _unpack(fh, "<H", path)
    raw = fh.read(n)
    if len(raw) != n:
        raise DataError(f"{path}: truncated file")
    return raw.decode("utf-8")


def _unpack(fh, fmt, path):
    size = struct.calcsize(fmt)
    raw = fh.read(size)
    if len(raw) != size:
        raise DataError(f"{path}: truncated file")
    return struct.unpack(fmt, raw)
