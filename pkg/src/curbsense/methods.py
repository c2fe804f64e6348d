"""The four detection variants compared in the evaluation harness.

naive      zero-mean Gaussian baseline, average extraction, direction-blind
nt         night-time baseline, average extraction, direction-blind
nt-dir     night-time baseline, average extraction, reverse travel removed
nt-dir-t   night-time baseline, top-shift extraction, reverse travel removed
"""

from __future__ import annotations

from dataclasses import dataclass

from .detect import (
    BaselineModel,
    DetectConfig,
    WindowStat,
    build_night_baseline,
    naive_baseline,
    window_stat,
)
from .geo import FORWARD, DirectedSegment, RoadNetwork
from .mapmatch import MatchedTrajectory, remove_reverse
from .metrics import LabelKey, LabelRecord
from .pipeline import merge_directions
from .store import RoadTimeIndex, build


@dataclass(frozen=True)
class DetectionMethod:
    name: str
    baseline: str      # "naive" or "night"
    directional: bool  # reverse travel removed and baselines keyed per direction
    extractor: str     # "avg" or "top"


METHODS = {
    "naive": DetectionMethod("naive", "naive", False, "avg"),
    "nt": DetectionMethod("nt", "night", False, "avg"),
    "nt-dir": DetectionMethod("nt-dir", "night", True, "avg"),
    "nt-dir-t": DetectionMethod("nt-dir-t", "night", True, "top"),
}

METHOD_ORDER = ["naive", "nt", "nt-dir", "nt-dir-t"]


@dataclass
class MethodContext:
    """Indexes and baselines shared by all four variants over one corpus."""

    net: RoadNetwork
    cfg: DetectConfig
    idx_dir: RoadTimeIndex
    idx_blind: RoadTimeIndex
    night_dir: BaselineModel
    night_blind: BaselineModel
    naive: BaselineModel

    @classmethod
    def build(
        cls,
        refined: list[MatchedTrajectory],
        net: RoadNetwork,
        baseline_days,
        cfg: DetectConfig,
    ) -> "MethodContext":
        """``refined`` must still contain reverse runs (pre-step-3 output)."""
        idx_dir = build(remove_reverse(refined, net))
        idx_blind = build(merge_directions(refined, net))
        return cls(
            net=net,
            cfg=cfg,
            idx_dir=idx_dir,
            idx_blind=idx_blind,
            night_dir=build_night_baseline(idx_dir, baseline_days, cfg),
            night_blind=build_night_baseline(idx_blind, baseline_days, cfg),
            naive=naive_baseline(net, cfg),
        )

    def _baseline_and_index(self, method: DetectionMethod):
        if method.baseline == "naive":
            base = self.naive
        else:
            base = self.night_dir if method.directional else self.night_blind
        idx = self.idx_dir if method.directional else self.idx_blind
        return base, idx


def method_stats(
    ctx: MethodContext, method: DetectionMethod, labels: list[LabelRecord]
) -> dict[LabelKey, WindowStat]:
    """Window statistics for each labelled (rid, hour).

    Direction-blind variants answer every directed label with the road-level
    statistic of the merged forward view; the stat for a (segment, hour) is
    computed once and shared between the two directed labels.
    """
    out: dict[LabelKey, WindowStat] = {}
    cache: dict[tuple, WindowStat] = {}
    base, idx = ctx._baseline_and_index(method)
    for rec in labels:
        rid = rec.rid if method.directional else DirectedSegment(rec.rid.seg_id, FORWARD)
        cache_key = (rid, rec.hour.start)
        st = cache.get(cache_key)
        if st is None:
            st = window_stat(base, idx, rid, rec.hour, ctx.cfg, method.extractor)
            cache[cache_key] = st
        out[rec.key] = st
    return out
