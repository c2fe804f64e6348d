"""Raw-trajectory cleaning: speed/sampling-rate filters and segmentation.

A pair of consecutive points is *qualified* when its implied speed sits in
[v_min, v_max] and neither the time gap nor the planar gap exceeds the
configured maxima. Cleaning keeps maximal runs of qualified pairs and drops
runs shorter than ``min_points``; one raw trajectory may therefore yield
several sub-trajectories.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .errors import DataError, FormatError
from .geo import GpsPoint, to_local


@dataclass
class CleaningConfig:
    v_max: float = 8.33      # m/s, ~30 km/h; riders above this are GPS noise or not riding
    v_min: float = 0.5       # m/s, drops stop-and-wait noise at intersections
    gap_max_s: float = 30.0
    gap_max_m: float = 50.0
    min_points: int = 5

    def __post_init__(self):
        if not (self.v_max > self.v_min >= 0):
            raise ValueError("require v_max > v_min >= 0")
        if self.gap_max_s <= 0 or self.min_points < 2:
            raise ValueError("require gap_max_s > 0 and min_points >= 2")


@dataclass
class RawTrajectory:
    traj_id: str
    bike_id: str
    user_id: str
    points: list[GpsPoint] = field(default_factory=list)


@dataclass
class SubTrajectory:
    parent_id: str
    seq_no: int
    points: list[GpsPoint]

    @property
    def sub_id(self) -> str:
        return f"{self.parent_id}#{self.seq_no}"


def speed_between(a: GpsPoint, b: GpsPoint, anchor: tuple[float, float]) -> float:
    """Planar distance over elapsed time, m/s."""
    if b.t <= a.t:
        raise DataError(f"non-increasing timestamps: {a.t} -> {b.t}")
    pa = to_local(anchor, a)
    pb = to_local(anchor, b)
    return math.hypot(pb.x - pa.x, pb.y - pa.y) / (b.t - a.t)


def _pair_qualified(a: GpsPoint, b: GpsPoint, anchor, cfg: CleaningConfig) -> bool:
    dt = b.t - a.t
    if dt <= 0 or dt > cfg.gap_max_s:
        return False
    pa = to_local(anchor, a)
    pb = to_local(anchor, b)
    gap = math.hypot(pb.x - pa.x, pb.y - pa.y)
    if gap > cfg.gap_max_m:
        return False
    v = gap / dt
    return cfg.v_min <= v <= cfg.v_max


def clean(tr: RawTrajectory, cfg: CleaningConfig, anchor: tuple[float, float]) -> list[SubTrajectory]:
    """Split a raw trajectory into qualified sub-trajectories.

    Returns maximal runs where every adjacent pair passes the speed and
    sampling-rate thresholds; runs shorter than cfg.min_points are dropped.
    """
    out: list[SubTrajectory] = []
    run: list[GpsPoint] = []
    seq = 0

    def flush():
        nonlocal run, seq
        if len(run) >= cfg.min_points:
            out.append(SubTrajectory(tr.traj_id, seq, run))
            seq += 1
        run = []

    for p in tr.points:
        if run and _pair_qualified(run[-1], p, anchor, cfg):
            run.append(p)
        else:
            flush()
            run = [p]
    flush()
    return out


# -- trajectory file format ------------------------------------------------
# `T <traj_id> <bike_id> <user_id>` header, `P <t> <lat> <lng>` point lines,
# one blank line between trajectories.

def load_trajectories(path) -> list[RawTrajectory]:
    out: list[RawTrajectory] = []
    cur: RawTrajectory | None = None
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, raw in enumerate(fh, start=1):
            line = raw.strip()
            if line.startswith("#"):
                continue
            if not line:
                cur = None
                continue
            parts = line.split()
            try:
                if parts[0] == "T":
                    if len(parts) != 4:
                        raise ValueError("expected: T <traj_id> <bike_id> <user_id>")
                    cur = RawTrajectory(parts[1], parts[2], parts[3])
                    out.append(cur)
                elif parts[0] == "P":
                    if cur is None:
                        raise ValueError("point line before any T header")
                    if len(parts) != 4:
                        raise ValueError("expected: P <t> <lat> <lng>")
                    p = GpsPoint(float(parts[2]), float(parts[3]), int(parts[1]))
                    if cur.points and p.t <= cur.points[-1].t:
                        raise ValueError(f"timestamps not strictly increasing at t={p.t}")
                    cur.points.append(p)
                else:
                    raise ValueError(f"unknown record type {parts[0]!r}")
            except ValueError as exc:
                raise FormatError(path, line_no, str(exc)) from exc
    return out


def save_trajectories(trajs: list[RawTrajectory], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for i, tr in enumerate(trajs):
            if i:
                fh.write("\n")
            fh.write(f"T {tr.traj_id} {tr.bike_id} {tr.user_id}\n")
            for p in tr.points:
                fh.write(f"P {p.t} {p.lat!r} {p.lng!r}\n")
