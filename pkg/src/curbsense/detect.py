"""Shift-distribution baselines, feature extraction, and KS-test detection.

Per directed segment, shifts are chunked into 50 m pieces of road and
resampled every 5 m along the offset axis. A baseline sample (night-time
traffic pooled over many nights, or a zero-mean Gaussian stand-in) is
compared against the evaluation window's sample with the two-sample
Kolmogorov-Smirnov statistic; the window is flagged when

    D > c(alpha) * sqrt((n + m) / (n * m)),   c(alpha) = sqrt(-ln(alpha/2) / 2).
"""

from __future__ import annotations

import math
import struct
import zlib
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError, FormatError
from .geo import DirectedSegment, RoadNetwork, directed_segments
from .mapmatch import MatchedTrajectory
from .store import RoadTimeIndex, TimeRange, query

BASELINE_MAGIC = b"CSBL1"
BASELINE_VERSION = 1

ILLEGAL = "illegal_parking"
NORMAL = "normal"
INSUFFICIENT = "insufficient_data"

DAY_S = 86_400
HOUR_S = 3_600


@dataclass
class DetectConfig:
    alpha: float = 0.71
    chunk_len: float = 50.0
    resample_step: float = 5.0
    top_k: int = 10
    bucket: float = 5.0
    night_start_hour: int = 23
    night_end_hour: int = 7
    naive_sigma: float = 5.0
    naive_draws: int = 200
    min_eval_trajs: int = 10
    n_min: int = 30          # minimum baseline sample size per chunk

    def __post_init__(self):
        if not (0 < self.alpha < 1):
            raise ValueError("alpha must be in (0, 1)")
        if min(self.chunk_len, self.resample_step, self.bucket) <= 0:
            raise ValueError("lengths must be positive")


@dataclass
class DetectionResult:
    rid: DirectedSegment
    chunk: int
    window: TimeRange
    d_stat: float
    n: int
    m: int
    decision: str


# -- feature extraction ------------------------------------------------------

def resample_uniform(mt: MatchedTrajectory, step: float) -> tuple[np.ndarray, np.ndarray]:
    """Linearly interpolate shifts on a uniform offset grid.

    The grid starts at the trajectory's minimum offset and has
    floor(span / step) + 1 samples. Duplicate offsets are averaged before
    interpolation. A zero-extent trajectory yields its single location.
    """
    offs = mt.offsets()
    shifts = mt.shifts()
    order = np.argsort(offs, kind="stable")
    offs, shifts = offs[order], shifts[order]
    uniq, inv = np.unique(offs, return_inverse=True)
    if len(uniq) < len(offs):
        sums = np.bincount(inv, weights=shifts)
        counts = np.bincount(inv)
        shifts = sums / counts
        offs = uniq
    span = offs[-1] - offs[0]
    if span <= 0:
        return offs[:1].copy(), shifts[:1].copy()
    count = int(math.floor(span / step + 1e-9)) + 1
    grid = offs[0] + step * np.arange(count)
    return grid, np.interp(grid, offs, shifts)


def chunk_points(mt: MatchedTrajectory, chunk_len: float) -> dict[int, list]:
    """Group a trajectory's points by floor(offset / chunk_len)."""
    out: dict[int, list] = {}
    for p in mt.points:
        out.setdefault(int(p.offset // chunk_len), []).append(p)
    return out


def extract_avg(trajs: list[MatchedTrajectory], cfg: DetectConfig) -> dict[int, np.ndarray]:
    """Average-shift features: per chunk, the mean shift of every 5 m offset
    bucket pooled across all trajectories. Empty buckets are omitted."""
    sums: dict[int, float] = {}
    counts: dict[int, int] = {}
    for mt in trajs:
        grid, vals = resample_uniform(mt, cfg.resample_step)
        buckets = (grid // cfg.bucket).astype(int)
        for b, v in zip(buckets, vals):
            sums[b] = sums.get(b, 0.0) + float(v)
            counts[b] = counts.get(b, 0) + 1
    per_bucket = int(round(cfg.chunk_len / cfg.bucket))
    out: dict[int, list] = {}
    for b in sorted(sums):
        out.setdefault(b // per_bucket, []).append(sums[b] / counts[b])
    return {c: np.asarray(v) for c, v in out.items()}


def extract_top(trajs: list[MatchedTrajectory], cfg: DetectConfig) -> dict[int, np.ndarray]:
    """Top-shift features: per trajectory per chunk, its top_k resampled
    shifts by absolute value (signed values kept), concatenated over
    trajectories."""
    out: dict[int, list] = {}
    for mt in trajs:
        grid, vals = resample_uniform(mt, cfg.resample_step)
        chunks = (grid // cfg.chunk_len).astype(int)
        for c in np.unique(chunks):
            v = vals[chunks == c]
            if len(v) > cfg.top_k:
                top = np.argsort(-np.abs(v), kind="stable")[: cfg.top_k]
                v = v[np.sort(top)]
            out.setdefault(int(c), []).extend(float(x) for x in v)
    return {c: np.asarray(v) for c, v in out.items()}


EXTRACTORS = {"avg": extract_avg, "top": extract_top}


# -- baseline models ---------------------------------------------------------

@dataclass
class BaselineModel:
    """Per-(directed segment, chunk) empirical shift samples."""

    chunk_len: float
    samples: dict[tuple[DirectedSegment, int], np.ndarray] = field(default_factory=dict)

    def rids(self) -> list[DirectedSegment]:
        return sorted({rid for rid, _ in self.samples})

    def chunks_for(self, rid: DirectedSegment) -> list[int]:
        return sorted(c for r, c in self.samples if r == rid)

    def get(self, rid: DirectedSegment, chunk: int) -> np.ndarray | None:
        return self.samples.get((rid, chunk))

    def restrict(self, rids) -> "BaselineModel":
        keep = set(rids)
        return BaselineModel(
            self.chunk_len,
            {k: v for k, v in self.samples.items() if k[0] in keep},
        )


def night_windows(days, cfg: DetectConfig) -> list[TimeRange]:
    """One [23:00, next-day 07:00) range per day index."""
    return [
        TimeRange(
            d * DAY_S + cfg.night_start_hour * HOUR_S,
            (d + 1) * DAY_S + cfg.night_end_hour * HOUR_S,
        )
        for d in days
    ]


def build_night_baseline(idx: RoadTimeIndex, days, cfg: DetectConfig) -> BaselineModel:
    """Pool night-time traffic into per-chunk baseline samples.

    Each night contributes its average-extraction bucket means; nights are
    concatenated. Entries with fewer than cfg.n_min values are dropped.
    """
    acc: dict[tuple[DirectedSegment, int], list] = {}
    windows = night_windows(days, cfg)
    for rid in idx.rids():
        for w in windows:
            trajs = query(idx, rid, w)
            if not trajs:
                continue
            for c, means in extract_avg(trajs, cfg).items():
                acc.setdefault((rid, c), []).extend(means.tolist())
    model = BaselineModel(cfg.chunk_len)
    for key, vals in acc.items():
        if len(vals) >= cfg.n_min:
            model.samples[key] = np.asarray(vals)
    return model


def naive_baseline(net: RoadNetwork, cfg: DetectConfig) -> BaselineModel:
    """Zero-mean Gaussian stand-in for the road shape, deterministic per rid."""
    model = BaselineModel(cfg.chunk_len)
    for rid in directed_segments(net):
        seg = net.segments[rid.seg_id]
        if seg.level == "highway":
            continue
        n_chunks = int(seg.length // cfg.chunk_len) + 1
        for c in range(n_chunks):
            seed = zlib.crc32(f"{rid.seg_id}|{rid.direction}|{c}".encode())
            rng = np.random.default_rng(seed)
            model.samples[(rid, c)] = rng.normal(0.0, cfg.naive_sigma, cfg.naive_draws)
    return model


# -- KS test -----------------------------------------------------------------

def ks_statistic(a, b) -> float:
    """Exact two-sample KS statistic: sup over the pooled sample points of
    the absolute ECDF difference, each ECDF evaluated just after its jump."""
    a = np.sort(np.asarray(a, dtype=np.float64))
    b = np.sort(np.asarray(b, dtype=np.float64))
    if len(a) == 0 or len(b) == 0:
        raise DataError("KS statistic needs two non-empty samples")
    xs = np.concatenate([a, b])
    fa = np.searchsorted(a, xs, side="right") / len(a)
    fb = np.searchsorted(b, xs, side="right") / len(b)
    return float(np.max(np.abs(fa - fb)))


def c_alpha(alpha: float) -> float:
    """Rejection coefficient c(alpha) = sqrt(-ln(alpha/2) / 2)."""
    if not (0 < alpha < 1):
        raise DataError(f"alpha must be in (0, 1), got {alpha}")
    return math.sqrt(-0.5 * math.log(alpha / 2.0))


def ks_threshold(alpha: float, n: int, m: int) -> float:
    return c_alpha(alpha) * math.sqrt((n + m) / (n * m))


def ks_reject(d: float, n: int, m: int, alpha: float) -> bool:
    """True (illegal-parking verdict) iff D exceeds the alpha threshold."""
    return d > ks_threshold(alpha, n, m)


# -- windowed detection -------------------------------------------------------

def detect_window(
    baseline: BaselineModel,
    idx: RoadTimeIndex,
    rid: DirectedSegment,
    window: TimeRange,
    cfg: DetectConfig,
    extractor: str = "top",
) -> list[DetectionResult]:
    """One decision per baseline chunk of ``rid`` for the given window."""
    chunks = baseline.chunks_for(rid)
    if not chunks:
        return []
    trajs = query(idx, rid, window)
    if len(trajs) < cfg.min_eval_trajs:
        return [
            DetectionResult(rid, c, window, 0.0, len(baseline.get(rid, c)), 0, INSUFFICIENT)
            for c in chunks
        ]
    eval_samples = EXTRACTORS[extractor](trajs, cfg)
    out = []
    for c in chunks:
        base = baseline.get(rid, c)
        ev = eval_samples.get(c)
        if ev is None or len(ev) == 0:
            out.append(DetectionResult(rid, c, window, 0.0, len(base), 0, INSUFFICIENT))
            continue
        d = ks_statistic(base, ev)
        decision = ILLEGAL if ks_reject(d, len(base), len(ev), cfg.alpha) else NORMAL
        out.append(DetectionResult(rid, c, window, d, len(base), len(ev), decision))
    return out


def rank_roads(results: list[DetectionResult]) -> list[tuple[DirectedSegment, float]]:
    """Rank directed segments by mean daily hours carrying an event.

    An hour counts once per (rid, window) when any chunk is flagged; the
    day count comes from the union of all result windows.
    """
    days = {r.window.start // DAY_S for r in results}
    if not days:
        return []
    event_hours: dict[DirectedSegment, set] = {}
    rids = set()
    for r in results:
        rids.add(r.rid)
        if r.decision == ILLEGAL:
            event_hours.setdefault(r.rid, set()).add(r.window.start)
    ranked = [(rid, len(event_hours.get(rid, ())) / len(days)) for rid in rids]
    ranked.sort(key=lambda kv: (-kv[1], kv[0]))
    return ranked


# -- per-window sufficient statistics (threshold sweeps reuse these) ----------

@dataclass
class WindowStat:
    """KS statistics for one (rid, window), computed once and reusable for
    every alpha: the rejection rule only compares D against a threshold."""

    rid: DirectedSegment
    window: TimeRange
    n_trajs: int
    chunks: list[tuple[int, float, int, int]]  # (chunk, D, n, m)

    @property
    def sufficient(self) -> bool:
        return bool(self.chunks)

    def score(self) -> float:
        """Max normalized statistic D / sqrt((n+m)/(n*m)) over chunks."""
        return max(
            (d / math.sqrt((n + m) / (n * m)) for _, d, n, m in self.chunks),
            default=0.0,
        )

    def positive_at(self, alpha: float) -> bool:
        """Road-level decision: any chunk rejected at this alpha."""
        if alpha <= 0:
            return False
        c = math.sqrt(max(0.0, -0.5 * math.log(alpha / 2.0)))
        return any(d > c * math.sqrt((n + m) / (n * m)) for _, d, n, m in self.chunks)


def window_stat(
    baseline: BaselineModel,
    idx: RoadTimeIndex,
    rid: DirectedSegment,
    window: TimeRange,
    cfg: DetectConfig,
    extractor: str = "top",
    trajs: list[MatchedTrajectory] | None = None,
) -> WindowStat:
    if trajs is None:
        trajs = query(idx, rid, window)
    chunks: list[tuple[int, float, int, int]] = []
    if len(trajs) >= cfg.min_eval_trajs:
        eval_samples = EXTRACTORS[extractor](trajs, cfg)
        for c in baseline.chunks_for(rid):
            base = baseline.get(rid, c)
            ev = eval_samples.get(c)
            if ev is not None and len(ev) > 0:
                chunks.append((c, ks_statistic(base, ev), len(base), len(ev)))
    return WindowStat(rid, window, len(trajs), chunks)


# -- persistence ---------------------------------------------------------------

def save_baseline(model: BaselineModel, path) -> None:
    with open(path, "wb") as fh:
        fh.write(BASELINE_MAGIC)
        fh.write(struct.pack("<Hd", BASELINE_VERSION, model.chunk_len))
        keys = sorted(model.samples, key=lambda k: (k[0].seg_id, k[0].direction, k[1]))
        fh.write(struct.pack("<I", len(keys)))
        for rid, c in keys:
            raw = rid.seg_id.encode("utf-8")
            fh.write(struct.pack("<H", len(raw)))
            fh.write(raw)
            fh.write(rid.direction.encode("ascii"))
            vals = model.samples[(rid, c)]
            fh.write(struct.pack("<iI", c, len(vals)))
            fh.write(np.asarray(vals, dtype="<f8").tobytes())


def load_baseline(path) -> BaselineModel:
    with open(path, "rb") as fh:
        if fh.read(len(BASELINE_MAGIC)) != BASELINE_MAGIC:
            raise DataError(f"{path}: not a baseline file")
        version, chunk_len = struct.unpack("<Hd", fh.read(10))
        if version != BASELINE_VERSION:
            raise DataError(f"{path}: unsupported baseline version {version}")
        (count,) = struct.unpack("<I", fh.read(4))
        model = BaselineModel(chunk_len)
        for _ in range(count):
            (slen,) = struct.unpack("<H", fh.read(2))
            seg_id = fh.read(slen).decode("utf-8")
            direction = fh.read(1).decode("ascii")
            c, n = struct.unpack("<iI", fh.read(8))
            raw = fh.read(8 * n)
            if len(raw) != 8 * n:
                raise DataError(f"{path}: truncated baseline file")
            model.samples[(DirectedSegment(seg_id, direction), c)] = np.frombuffer(
                raw, dtype="<f8"
            ).copy()
        return model


def save_results(results: list[DetectionResult], path) -> None:
    """`R <seg_id> <dir> <chunk> <start> <end> <D> <n> <m> <decision>` lines."""
    with open(path, "w", encoding="utf-8") as fh:
        for r in results:
            fh.write(format_result(r) + "\n")


def format_result(r: DetectionResult) -> str:
    return (
        f"R {r.rid.seg_id} {r.rid.direction} {r.chunk} "
        f"{r.window.start} {r.window.end} {r.d_stat:.6f} {r.n} {r.m} {r.decision}"
    )


def load_results(path) -> list[DetectionResult]:
    out = []
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if len(parts) != 10 or parts[0] != "R":
                raise FormatError(path, line_no, "bad results line")
            out.append(
                DetectionResult(
                    DirectedSegment(parts[1], parts[2]),
                    int(parts[3]),
                    TimeRange(int(parts[4]), int(parts[5])),
                    float(parts[6]),
                    int(parts[7]),
                    int(parts[8]),
                    parts[9],
                )
            )
    return out
