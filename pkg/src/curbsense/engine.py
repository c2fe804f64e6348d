"""Parallel detection runtime: warm-up, then broadcast servicing.

Worker processes each load the baseline slice and index slice for their
round-robin partition of directed segments during warm-up and signal
readiness. A service request (time range) is broadcast to every worker;
each runs the hourly KS detection over its own segments and the aggregator
merges everything into one deterministically ranked report. The report
content is a pure function of (baseline, index, request); the worker count
only changes the wall-clock duration.
"""

from __future__ import annotations

import multiprocessing as mp
import time
import traceback
from dataclasses import dataclass, field

from .detect import (
    ILLEGAL,
    HOUR_S,
    BaselineModel,
    DetectConfig,
    DetectionResult,
    detect_window,
)
from .errors import DataError
from .geo import DirectedSegment
from .store import RoadTimeIndex, TimeRange


@dataclass
class ServiceRequest:
    window: TimeRange


@dataclass
class ServiceReport:
    results: list[DetectionResult]
    duration_ms: float
    workers: int


@dataclass
class EnginePlan:
    workers: int
    partitions: dict[int, list[DirectedSegment]]


def plan_partitions(rids: list[DirectedSegment], workers: int) -> EnginePlan:
    """Round-robin assignment over a fixed rid ordering."""
    if workers < 1:
        raise DataError("need at least one worker")
    parts: dict[int, list[DirectedSegment]] = {w: [] for w in range(workers)}
    for i, rid in enumerate(sorted(rids)):
        parts[i % workers].append(rid)
    return EnginePlan(workers, parts)


def hourly_windows(window: TimeRange, hour_s: int = HOUR_S) -> list[TimeRange]:
    """Decompose a request range into consecutive one-hour windows."""
    window.validate()
    out = []
    start = window.start
    while start < window.end:
        out.append(TimeRange(start, min(start + hour_s, window.end)))
        start += hour_s
    return out


def _worker_main(wid, rids, baseline, idx, cfg, inbox, outbox):
    outbox.put(("ready", wid, None))
    while True:
        req = inbox.get()
        if req is None:
            return
        try:
            results = []
            for w in hourly_windows(req.window):
                for rid in rids:
                    results.extend(detect_window(baseline, idx, rid, w, cfg))
            outbox.put(("done", wid, results))
        except Exception:
            outbox.put(("error", wid, traceback.format_exc()))


class Engine:
    """Owns the worker processes for one warmed-up plan."""

    def __init__(self, plan: EnginePlan, ctx, inboxes, outbox):
        self.plan = plan
        self._ctx = ctx
        self._inboxes = inboxes
        self._outbox = outbox
        self._procs: list = []

    def close(self) -> None:
        for q in self._inboxes:
            try:
                q.put(None)
            except (OSError, ValueError):
                pass
        for p in self._procs:
            p.join(timeout=10)
            if p.is_alive():
                p.terminate()
        self._procs = []

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def warm_up(
    baseline: BaselineModel,
    idx: RoadTimeIndex,
    workers: int,
    cfg: DetectConfig | None = None,
) -> Engine:
    """Partition the baseline rids, start the workers, and wait until every
    worker has loaded its slice and reported ready."""
    cfg = cfg or DetectConfig()
    plan = plan_partitions(baseline.rids(), workers)
    try:
        ctx = mp.get_context("fork")
    except ValueError:  # non-fork platforms: slices get pickled instead
        ctx = mp.get_context("spawn")
    outbox = ctx.SimpleQueue()
    inboxes = [ctx.SimpleQueue() for _ in range(workers)]
    engine = Engine(plan, ctx, inboxes, outbox)
    for wid in range(workers):
        rids = plan.partitions[wid]
        p = ctx.Process(
            target=_worker_main,
            args=(
                wid,
                rids,
                baseline.restrict(rids),
                idx.restrict(rids),
                cfg,
                inboxes[wid],
                outbox,
            ),
            daemon=True,
        )
        p.start()
        engine._procs.append(p)
    ready = set()
    while len(ready) < workers:
        kind, wid, payload = outbox.get()
        if kind != "ready":
            raise RuntimeError(f"worker {wid} failed during warm-up: {payload}")
        ready.add(wid)
    return engine


def service(engine: Engine, request: ServiceRequest) -> ServiceReport:
    """Broadcast the request, gather every partition, merge and rank.

    Nothing is emitted until all workers have answered; the merged report is
    sorted by per-rid illegal-chunk count (descending), then rid, window,
    chunk, so it is identical for any worker count.
    """
    t0 = time.perf_counter()
    for q in engine._inboxes:
        q.put(request)
    merged: list[DetectionResult] = []
    pending = set(range(engine.plan.workers))
    while pending:
        kind, wid, payload = engine._outbox.get()
        if kind == "error":
            raise RuntimeError(f"worker {wid} failed: {payload}")
        merged.extend(payload)
        pending.discard(wid)
    illegal_count: dict[DirectedSegment, int] = {}
    for r in merged:
        if r.decision == ILLEGAL:
            illegal_count[r.rid] = illegal_count.get(r.rid, 0) + 1
    merged.sort(
        key=lambda r: (
            -illegal_count.get(r.rid, 0),
            r.rid,
            r.window.start,
            r.chunk,
        )
    )
    duration_ms = (time.perf_counter() - t0) * 1000.0
    return ServiceReport(merged, duration_ms, engine.plan.workers)
