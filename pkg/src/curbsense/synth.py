"""Ground-truth synthetic data: grid networks, rider trajectories, obstacle
injection, and event streams for the patrol simulator.

Everything is driven by splittable per-trajectory RNG streams derived from
(seed, stream_key, trajectory index), so output is bit-reproducible and can
be generated in parallel without changing results.
"""

from __future__ import annotations

import math
import zlib
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import DataError
from .geo import (
    BACKWARD,
    FORWARD,
    DirectedSegment,
    GpsPoint,
    RoadNetwork,
    build_network,
    directed_segments,
    from_local,
)
from .metrics import LabelRecord
from .store import TimeRange
from .trajprep import RawTrajectory

BASE_LAT = 40.0
BASE_LNG = -105.0
DEG = 6_371_000.0 * math.pi / 180.0

DAY_S = 86_400
HOUR_S = 3_600


@dataclass(frozen=True)
class Obstacle:
    position: float   # meters along the directed segment
    length: float     # meters of blocked curb
    push: float       # lateral displacement away from the curb, meters
    ramp: float = 10.0  # smooth lead-in/out on both sides


@dataclass
class SynthConfig:
    seed: int = 0
    grid_rows: int = 6
    grid_cols: int = 6
    spacing_m: float = 500.0
    rider_speed: tuple[float, float] = (3.0, 5.0)  # m/s
    gps_sigma: float = 2.0
    sample_dt: int = 4
    obstacle: Obstacle = field(default_factory=lambda: Obstacle(200.0, 20.0, 2.0))
    reverse_rider_frac: float = 0.1
    night_traffic_frac: float = 0.05
    # behavioral knobs
    lane_offset: float = -1.5   # riders keep right: shift is negative in their frame
    lane_sigma: float = 0.3
    wander_sigma: float = 0.5
    wander_tau_s: float = 10.0
    along_sigma_frac: float = 0.5
    margin_m: float = 10.0      # keep clear of intersections


@dataclass
class TrajTruth:
    traj_id: str
    rid: DirectedSegment        # intended directed segment
    travel: DirectedSegment     # actual travel direction (differs when reverse)
    reverse: bool
    affected: bool              # generated with the obstacle displacement


@dataclass
class SynthTruth:
    trajectories: dict[str, TrajTruth] = field(default_factory=dict)
    window_labels: dict[tuple[DirectedSegment, int], bool] = field(default_factory=dict)

    def add(self, truths: list[TrajTruth]) -> None:
        for t in truths:
            self.trajectories[t.traj_id] = t


def _traj_rng(seed: int, stream_key: int, i: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(stream_key, i)))


def stream_key(*parts) -> int:
    """Stable 32-bit stream id from arbitrary tokens."""
    return zlib.crc32("|".join(str(p) for p in parts).encode())


def gen_network(cfg: SynthConfig) -> RoadNetwork:
    """rows x cols lattice; horizontal and vertical segments alternate
    between one-way and bidirectional; all segments are local level."""
    if cfg.grid_rows < 2 or cfg.grid_cols < 2:
        raise DataError("grid needs at least 2x2 nodes")
    nodes = {}
    for r in range(cfg.grid_rows):
        for c in range(cfg.grid_cols):
            lat = BASE_LAT + (r * cfg.spacing_m) / DEG
            lng = BASE_LNG + (c * cfg.spacing_m) / (
                math.cos(math.radians(BASE_LAT)) * DEG
            )
            nodes[f"n{r:02d}x{c:02d}"] = (lat, lng)
    edges = []
    k = 0
    for r in range(cfg.grid_rows):
        for c in range(cfg.grid_cols - 1):
            a, b = f"n{r:02d}x{c:02d}", f"n{r:02d}x{c + 1:02d}"
            edges.append((f"h{r:02d}x{c:02d}", a, b, "local", k % 2 == 1, [nodes[a], nodes[b]]))
            k += 1
    for r in range(cfg.grid_rows - 1):
        for c in range(cfg.grid_cols):
            a, b = f"n{r:02d}x{c:02d}", f"n{r + 1:02d}x{c:02d}"
            edges.append((f"v{r:02d}x{c:02d}", a, b, "local", k % 2 == 1, [nodes[a], nodes[b]]))
            k += 1
    return build_network(nodes, edges)


def gen_trajectories(
    net: RoadNetwork,
    rid: DirectedSegment,
    n: int,
    cfg: SynthConfig,
    obstacle: Obstacle | None = None,
    start_time: int = 0,
    time_spread: int = HOUR_S,
    affected_frac: float = 1.0,
    id_prefix: str = "s",
    key: int = 0,
) -> tuple[list[RawTrajectory], list[TrajTruth]]:
    """Riders traversing one directed segment.

    Lateral position = lane offset + OU wander + per-point GPS noise, with
    the obstacle displacing non-reverse riders away from the curb inside its
    span (linear ramps on both sides). A reverse rider travels against the
    intended direction in the opposite lane and never sees the obstacle.
    """
    seg = net.segments[rid.seg_id]
    length = seg.length
    fwd_intent = rid.direction == FORWARD
    trajs: list[RawTrajectory] = []
    truths: list[TrajTruth] = []
    for i in range(n):
        rng = _traj_rng(cfg.seed, key, i)
        speed = rng.uniform(*cfg.rider_speed)
        reverse = bool(rng.random() < cfg.reverse_rider_frac)
        affected = (
            obstacle is not None and not reverse and rng.random() < affected_frac
        )
        lane = cfg.lane_offset + rng.normal(0.0, cfg.lane_sigma)
        lo = cfg.margin_m + rng.uniform(0.0, cfg.margin_m)
        hi = length - cfg.margin_m - rng.uniform(0.0, cfg.margin_m)
        if hi <= lo:
            lo, hi = 0.0, length
        step = speed * cfg.sample_dt
        n_pts = max(2, int((hi - lo) / step) + 1)
        rider_off = lo + step * np.arange(n_pts)
        rider_off = rider_off[rider_off <= hi + 1e-9]

        # OU wander, stationary sd = wander_sigma
        a = math.exp(-cfg.sample_dt / cfg.wander_tau_s)
        w = np.empty(len(rider_off))
        w[0] = rng.normal(0.0, cfg.wander_sigma)
        innov = rng.normal(0.0, cfg.wander_sigma * math.sqrt(1 - a * a), len(rider_off))
        for j in range(1, len(rider_off)):
            w[j] = w[j - 1] * a + innov[j]
        lateral = lane + w
        if affected:
            lateral = lateral + obstacle.push * _ramp(rider_off, obstacle)
        lateral = lateral + rng.normal(0.0, cfg.gps_sigma, len(rider_off))
        along = rider_off + rng.normal(
            0.0, cfg.gps_sigma * cfg.along_sigma_frac, len(rider_off)
        )

        travels_forward = fwd_intent != reverse
        if travels_forward:
            seg_off, seg_lat = along, lateral
        else:
            seg_off, seg_lat = length - along, -lateral
        duration = (len(rider_off) - 1) * cfg.sample_dt
        t0 = start_time + int(rng.integers(0, max(1, time_spread - duration)))
        pts = []
        for j in range(len(rider_off)):
            local = seg.geom.locate(float(seg_off[j]), float(seg_lat[j]))
            pts.append(from_local(net.anchor, local, t0 + j * cfg.sample_dt))
        traj_id = f"{id_prefix}{key:08x}n{i:04d}"
        trajs.append(RawTrajectory(traj_id, f"b{i % 997}", f"u{i % 1789}", pts))
        truths.append(
            TrajTruth(
                traj_id,
                rid,
                DirectedSegment(rid.seg_id, FORWARD if travels_forward else BACKWARD),
                reverse,
                affected,
            )
        )
    return trajs, truths


def _ramp(offsets: np.ndarray, ob: Obstacle) -> np.ndarray:
    """1 inside [position, position+length], linear to 0 over ``ramp`` m."""
    up = np.clip((offsets - (ob.position - ob.ramp)) / ob.ramp, 0.0, 1.0)
    down = np.clip(((ob.position + ob.length + ob.ramp) - offsets) / ob.ramp, 0.0, 1.0)
    return np.minimum(up, down)


# -- event streams -------------------------------------------------------------

@dataclass
class EventStreamConfig:
    """Per-hour Bernoulli event process over directed segments."""

    p_background: float = 0.05
    p_hot: float = 0.8
    hot_rids: tuple = ()
    rush_hours: tuple = (8, 9, 17, 18)
    rush_multiplier: float = 3.0
    hours: tuple = tuple(range(24))
    affected_frac_range: tuple[float, float] = (0.4, 0.9)


def gen_event_stream(
    net: RoadNetwork,
    days,
    cfg: SynthConfig,
    ev: EventStreamConfig | None = None,
    trajs_per_hour: int = 0,
) -> tuple[dict[tuple[int, int], list[RawTrajectory]], SynthTruth]:
    """Hourly event process with hot spots and a rush-hour multiplier.

    When ``trajs_per_hour`` > 0, every (rid, hour) additionally gets rider
    traffic, generated with the obstacle when that hour is active. Truth
    carries the per-(rid, hour-start) event labels.
    """
    ev = ev or EventStreamConfig()
    hot = set(ev.hot_rids)
    truth = SynthTruth()
    batches: dict[tuple[int, int], list[RawTrajectory]] = {}
    rids = directed_segments(net)
    for day in days:
        for hour in ev.hours:
            start = day * DAY_S + hour * HOUR_S
            rng = np.random.default_rng(
                np.random.SeedSequence(cfg.seed, spawn_key=(stream_key("ev", start),))
            )
            for rid in rids:
                p = ev.p_hot if rid in hot else ev.p_background
                if hour in ev.rush_hours:
                    p = min(1.0, p * ev.rush_multiplier)
                active = bool(rng.random() < p)
                truth.window_labels[(rid, start)] = active
                if trajs_per_hour > 0:
                    frac = rng.uniform(*ev.affected_frac_range)
                    obstacle = _place_obstacle(net, rid, cfg, rng) if active else None
                    trajs, tt = gen_trajectories(
                        net,
                        rid,
                        trajs_per_hour,
                        cfg,
                        obstacle=obstacle,
                        start_time=start,
                        affected_frac=frac,
                        key=stream_key("evtraj", rid.seg_id, rid.direction, start),
                    )
                    batches.setdefault((day, hour), []).extend(trajs)
                    truth.add(tt)
    return batches, truth


def _place_obstacle(net, rid, cfg: SynthConfig, rng) -> Obstacle:
    length = net.segments[rid.seg_id].length
    ob = cfg.obstacle
    lo = cfg.margin_m + ob.ramp
    hi = max(lo + 1.0, length - ob.length - cfg.margin_m - ob.ramp)
    return replace(ob, position=float(rng.uniform(lo, hi)))


# -- detection corpus preset -----------------------------------------------------

@dataclass
class DetectionCorpus:
    net: RoadNetwork
    raws: list[RawTrajectory]
    labels: list[LabelRecord]
    truth: SynthTruth
    baseline_days: list[int]

    @property
    def eval_windows(self) -> list[TimeRange]:
        return sorted({rec.hour for rec in self.labels})


def detect_preset(
    cfg: SynthConfig,
    nights: int = 30,
    n_windows: int = 200,
    trajs_per_window: int = 30,
    night_trajs: int = 3,
    positive_frac: float = 0.5,
    eval_hours: tuple = tuple(range(8, 19)),
    affected_frac_range: tuple[float, float] = (0.4, 0.9),
) -> DetectionCorpus:
    """Night baseline traffic plus labelled evaluation windows.

    Baseline nights occupy days [0, nights); evaluation windows start on the
    first day whose night is not used for the baseline, cycling over
    directed segments and daytime hours. Positive windows carry an obstacle
    that displaces a random fraction of that hour's riders.
    """
    net = gen_network(cfg)
    rids = directed_segments(net)
    baseline_days = list(range(nights))
    raws: list[RawTrajectory] = []
    truth = SynthTruth()

    for day in baseline_days:
        night_start = day * DAY_S + 23 * HOUR_S
        for rid in rids:
            trajs, tt = gen_trajectories(
                net,
                rid,
                night_trajs,
                cfg,
                start_time=night_start,
                time_spread=8 * HOUR_S,
                key=stream_key("night", rid.seg_id, rid.direction, day),
            )
            raws.extend(trajs)
            truth.add(tt)

    labels: list[LabelRecord] = []
    label_rng = np.random.default_rng(np.random.SeedSequence(cfg.seed, spawn_key=(1,)))
    day = nights + 1
    hour_i = 0
    rid_i = 0
    for _ in range(n_windows):
        rid = rids[rid_i % len(rids)]
        hour = eval_hours[hour_i % len(eval_hours)]
        rid_i += 1
        if rid_i % len(rids) == 0:
            hour_i += 1
            if hour_i % len(eval_hours) == 0:
                day += 1
        start = day * DAY_S + hour * HOUR_S
        positive = bool(label_rng.random() < positive_frac)
        obstacle = _place_obstacle(net, rid, cfg, label_rng) if positive else None
        frac = float(label_rng.uniform(*affected_frac_range))
        trajs, tt = gen_trajectories(
            net,
            rid,
            trajs_per_window,
            cfg,
            obstacle=obstacle,
            start_time=start,
            affected_frac=frac,
            key=stream_key("eval", rid.seg_id, rid.direction, start),
        )
        raws.extend(trajs)
        truth.add(tt)
        labels.append(LabelRecord(rid, TimeRange(start, start + HOUR_S), positive))
        truth.window_labels[(rid, start)] = positive
    return DetectionCorpus(net, raws, labels, truth, baseline_days)


# -- per-step eta streams for the patrol simulator -------------------------------

@dataclass
class EtaStreamConfig:
    """Per-step activity: hourly Bernoulli status expanded to 10-minute steps."""

    hot_segs: tuple = ()
    p_hot: float = 0.75
    p_background: float = 0.01
    steps_per_hour: int = 6


def gen_eta_stream(
    net: RoadNetwork,
    t_steps: int,
    cfg: SynthConfig,
    ec: EtaStreamConfig,
    episode: int = 0,
) -> list[set[str]]:
    """Active segment sets per step; hot segments flicker hot per hour."""
    rng = np.random.default_rng(
        np.random.SeedSequence(cfg.seed, spawn_key=(stream_key("eta", episode),))
    )
    seg_ids = sorted(net.segments)
    hot = set(ec.hot_segs)
    stream: list[set[str]] = []
    hour_active: set[str] = set()
    for t in range(t_steps):
        if t % ec.steps_per_hour == 0:
            hour_active = {
                s
                for s in seg_ids
                if rng.random() < (ec.p_hot if s in hot else ec.p_background)
            }
        stream.append(set(hour_active))
    return stream
