"""Ground-truth scoring: confusion counts, F1, threshold sweep, ROC/AUC, RPE."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .detect import ILLEGAL, INSUFFICIENT, NORMAL, WindowStat
from .errors import DataError, FormatError
from .geo import DirectedSegment
from .store import TimeRange

LabelKey = tuple[DirectedSegment, int]  # (rid, window start seconds)


@dataclass
class LabelRecord:
    rid: DirectedSegment
    hour: TimeRange
    label: bool

    @property
    def key(self) -> LabelKey:
        return (self.rid, self.hour.start)


def confusion(
    labels: Mapping[LabelKey, bool], predictions: Mapping[LabelKey, str]
) -> tuple[int, int, int, int]:
    """(TP, FP, FN, TN); insufficient_data predictions are excluded.

    Every label key must have a prediction.
    """
    missing = set(labels) - set(predictions)
    if missing:
        raise DataError(f"{len(missing)} labels without predictions")
    tp = fp = fn = tn = 0
    for key, truth in labels.items():
        pred = predictions[key]
        if pred == INSUFFICIENT:
            continue
        if pred not in (ILLEGAL, NORMAL):
            raise DataError(f"bad prediction value {pred!r}")
        positive = pred == ILLEGAL
        if truth and positive:
            tp += 1
        elif truth:
            fn += 1
        elif positive:
            fp += 1
        else:
            tn += 1
    return tp, fp, fn, tn


def f1(counts: tuple[int, int, int, int]) -> tuple[float, float, float]:
    """(precision, recall, F1) with the all-zero degenerate cases pinned to 0."""
    tp, fp, fn, _ = counts
    p = tp / (tp + fp) if tp + fp > 0 else 0.0
    r = tp / (tp + fn) if tp + fn > 0 else 0.0
    score = 2 * p * r / (p + r) if p + r > 0 else 0.0
    return p, r, score


def _predictions_at(stats: Mapping[LabelKey, WindowStat], alpha: float) -> dict[LabelKey, str]:
    out = {}
    for key, st in stats.items():
        if not st.sufficient:
            out[key] = INSUFFICIENT
        else:
            out[key] = ILLEGAL if st.positive_at(alpha) else NORMAL
    return out


def sweep_alpha(
    labels: Mapping[LabelKey, bool],
    stats: Mapping[LabelKey, WindowStat],
    step: float = 0.01,
) -> tuple[float, float, list[tuple[float, float, float, float]]]:
    """F1 over alpha = 0, step, ..., 1; returns (best_alpha, best_f1, rows).

    Rows are (alpha, precision, recall, f1); the argmax resolves ties toward
    the smaller alpha.
    """
    n_steps = int(round(1.0 / step))
    rows = []
    best_alpha, best_f1 = 0.0, -1.0
    for i in range(n_steps + 1):
        alpha = round(i * step, 10)
        preds = _predictions_at(stats, alpha)
        p, r, score = f1(confusion(labels, preds))
        rows.append((alpha, p, r, score))
        if score > best_f1:
            best_alpha, best_f1 = alpha, score
    return best_alpha, best_f1, rows


@dataclass
class RocCurve:
    thresholds: list[float]          # leading +inf, then unique scores descending
    points: list[tuple[float, float]]  # (fp_rate, tp_rate), starts (0,0), ends (1,1)
    auc: float


def roc(labels: Mapping[LabelKey, bool], scores: Mapping[LabelKey, float]) -> RocCurve:
    """ROC by sweeping a decision threshold over the window scores.

    A window counts positive at threshold T when score >= T; thresholds run
    over the unique scores descending, so tied scores move together and the
    trapezoid AUC equals the pairwise ranking probability with ties at 1/2.
    Only labelled windows with a score participate.
    """
    keys = [k for k in labels if k in scores]
    y = np.array([labels[k] for k in keys], dtype=bool)
    s = np.array([scores[k] for k in keys], dtype=float)
    pos = int(y.sum())
    neg = len(y) - pos
    if pos == 0 or neg == 0:
        raise DataError("ROC needs at least one positive and one negative label")
    order = np.argsort(-s, kind="stable")
    y, s = y[order], s[order]
    thresholds = [float("inf")]
    points = [(0.0, 0.0)]
    tp = fp = 0
    i = 0
    while i < len(s):
        j = i
        while j < len(s) and s[j] == s[i]:
            if y[j]:
                tp += 1
            else:
                fp += 1
            j += 1
        thresholds.append(float(s[i]))
        points.append((fp / neg, tp / pos))
        i = j
    xs = np.array([p[0] for p in points])
    ys = np.array([p[1] for p in points])
    auc = float(np.trapezoid(ys, xs))
    return RocCurve(thresholds, points, auc)


def trajectory_count_trend(counts, aucs) -> float:
    """Spearman correlation between evaluation-trajectory counts and AUC."""
    return spearman(counts, aucs)


def roc_from_stats(
    labels: Mapping[LabelKey, bool], stats: Mapping[LabelKey, WindowStat]
) -> RocCurve:
    scores = {k: st.score() for k, st in stats.items() if st.sufficient}
    return roc(labels, scores)


def rpe(n_catch: int, n_tot: int) -> float:
    """Ratio of processed events to generated events."""
    if n_tot <= 0:
        raise DataError("RPE undefined: no events generated")
    return n_catch / n_tot


def spearman(xs, ys) -> float:
    """Spearman rank correlation with average ranks for ties."""
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    if len(xs) != len(ys) or len(xs) < 2:
        raise DataError("spearman needs two equal-length sequences, n >= 2")
    rx, ry = _ranks(xs), _ranks(ys)
    rx -= rx.mean()
    ry -= ry.mean()
    denom = math.sqrt(float((rx ** 2).sum() * (ry ** 2).sum()))
    if denom == 0:
        return 0.0
    return float((rx * ry).sum() / denom)


def _ranks(v: np.ndarray) -> np.ndarray:
    order = np.argsort(v, kind="stable")
    ranks = np.empty(len(v), dtype=float)
    i = 0
    while i < len(v):
        j = i
        while j < len(v) and v[order[j]] == v[order[i]]:
            j += 1
        ranks[order[i:j]] = (i + j - 1) / 2.0 + 1.0
        i = j
    return ranks


# -- labels file -------------------------------------------------------------
# `L <seg_id> <dir> <hour_start> <label:1|0>`

def load_labels(path, hour_s: int = 3600) -> list[LabelRecord]:
    out: list[LabelRecord] = []
    seen: set[LabelKey] = set()
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if len(parts) != 5 or parts[0] != "L" or parts[4] not in ("0", "1"):
                raise FormatError(path, line_no, "expected: L <seg_id> <dir> <start> <0|1>")
            rid = DirectedSegment(parts[1], parts[2])
            start = int(parts[3])
            rec = LabelRecord(rid, TimeRange(start, start + hour_s), parts[4] == "1")
            if rec.key in seen:
                raise FormatError(path, line_no, f"duplicate label for {rid} @ {start}")
            seen.add(rec.key)
            out.append(rec)
    return out


def save_labels(records: list[LabelRecord], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(
                f"L {rec.rid.seg_id} {rec.rid.direction} {rec.hour.start} "
                f"{1 if rec.label else 0}\n"
            )


def write_sweep_csv(rows, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["alpha", "p", "r", "f1"])
        for alpha, p, r, score in rows:
            w.writerow([f"{alpha:.2f}", f"{p:.6f}", f"{r:.6f}", f"{score:.6f}"])


def write_roc_csv(curve: RocCurve, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["threshold", "fpr", "tpr"])
        for t, (x, y) in zip(curve.thresholds, curve.points):
            w.writerow([f"{t:.6g}", f"{x:.6f}", f"{y:.6f}"])
