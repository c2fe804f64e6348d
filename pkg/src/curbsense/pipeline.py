"""End-to-end trajectory pre-processing: clean, match, refine, de-reverse."""

from __future__ import annotations

from .geo import FORWARD, BACKWARD, DirectedSegment, RoadNetwork
from .mapmatch import (
    MatchConfig,
    MatchedPoint,
    MatchedTrajectory,
    NetworkMatcher,
    match,
    refine_direction,
    refine_distance,
    remove_reverse,
)
from .trajprep import CleaningConfig, RawTrajectory, clean


def clean_and_match(
    raws: list[RawTrajectory],
    net: RoadNetwork,
    clean_cfg: CleaningConfig,
    match_cfg: MatchConfig,
    matcher: NetworkMatcher | None = None,
) -> tuple[list[MatchedTrajectory], dict[str, int]]:
    """Clean raw trajectories, match them, and apply the geometric filters.

    Reverse-travel removal is left to the caller so direction-blind
    consumers can keep the reverse runs.
    """
    matcher = matcher or NetworkMatcher(net)
    counts = {
        "raw": len(raws),
        "points_in": sum(len(t.points) for t in raws),
        "subs": 0,
        "matched": 0,
        "after_distance": 0,
        "after_direction": 0,
    }
    refined: list[MatchedTrajectory] = []
    for raw in raws:
        subs = clean(raw, clean_cfg, net.anchor)
        counts["subs"] += len(subs)
        for sub in subs:
            for mt in match(sub, net, match_cfg, matcher):
                counts["matched"] += 1
                if not refine_distance(mt, match_cfg):
                    continue
                counts["after_distance"] += 1
                if not refine_direction(mt, match_cfg):
                    continue
                counts["after_direction"] += 1
                refined.append(mt)
    counts["points_matched"] = sum(len(m.points) for m in refined)
    return refined, counts


def preprocess(
    raws: list[RawTrajectory],
    net: RoadNetwork,
    clean_cfg: CleaningConfig,
    match_cfg: MatchConfig,
) -> tuple[list[MatchedTrajectory], dict[str, int]]:
    """Full pipeline including reverse-trajectory removal."""
    refined, counts = clean_and_match(raws, net, clean_cfg, match_cfg)
    final = remove_reverse(refined, net)
    counts["after_reverse"] = len(final)
    return final, counts


def merge_directions(
    mts: list[MatchedTrajectory], net: RoadNetwork
) -> list[MatchedTrajectory]:
    """Re-express every trajectory in the forward frame of its segment.

    Used by direction-blind detection variants: backward runs get their
    shifts negated and offsets re-based, and everything is keyed under the
    forward directed id.
    """
    out = []
    for mt in mts:
        if mt.rid.direction == BACKWARD:
            length = net.segments[mt.rid.seg_id].length
            pts = [MatchedPoint(p.t, length - p.offset, -p.shift) for p in mt.points]
            out.append(
                MatchedTrajectory(mt.parent_id, DirectedSegment(mt.rid.seg_id, FORWARD), pts)
            )
        else:
            out.append(mt)
    return out
