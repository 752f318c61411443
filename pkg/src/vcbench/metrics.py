"""Task metrics and rate aggregation: IoU, mAP, MOTA, BD-rate, bpp/kbps.

evaluate_map follows the pooled-detection protocol: ten IoU thresholds from
0.50 to 0.95, greedy matching in descending score order (ties keep insertion
order), 101-point interpolated precision, mean over categories then
thresholds, at most 100 detections per image per category. Categories that
appear only in detections contribute false positives and are excluded from
the mean but reported separately.

evaluate_mota follows the CLEAR procedure at IoU 0.5 with correspondence
propagation, a Hungarian step maximizing total IoU (ties broken toward lower
(gt index, tracker index)), and identity switches counted per matched ground
truth whose assigned tracker id changed since its previous assignment.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Protocol, Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

from .errors import (
    CurveMonotonicityError,
    CurveOverlapError,
    IncompleteRunError,
    ValidationError,
)

IOU_THRESHOLDS = (0.50, 0.55, 0.60, 0.65, 0.70, 0.75, 0.80, 0.85, 0.90, 0.95)
RECALL_POINTS = tuple(i / 100.0 for i in range(101))
MAX_DETECTIONS_PER_IMAGE = 100
MOTA_IOU = 0.5
MIN_BD_POINTS = 4
BD_SAMPLES = 1000


def iou(a: Sequence[float], b: Sequence[float]) -> float:
    """Intersection over union of two corner-form boxes; degenerate or
    disjoint pairs score 0."""
    ix1, iy1 = max(a[0], b[0]), max(a[1], b[1])
    ix2, iy2 = min(a[2], b[2]), min(a[3], b[3])
    iw, ih = max(ix2 - ix1, 0.0), max(iy2 - iy1, 0.0)
    inter = iw * ih
    if inter <= 0.0:
        return 0.0
    union = (a[2] - a[0]) * (a[3] - a[1]) + (b[2] - b[0]) * (b[3] - b[1]) - inter
    if union <= 0.0:
        return 0.0
    return inter / union


# ---------------------------------------------------------------------------
# mAP


@dataclass(frozen=True)
class MatchResult:
    """Matching outcome for one image at one IoU threshold.

    Entries pair the detection's index in the evaluated sequence with the
    index of the matched ground truth (within the same item and category, in
    input order) or None, plus the overlap. No ground truth index repeats.
    """

    item_id: str
    category: str
    threshold: float
    entries: tuple[tuple[int, int | None, float], ...]


@dataclass
class MapResult:
    map: float
    per_threshold: dict[float, float]
    ap_table: dict[str, dict[float, float]]
    fp_only_categories: list[str]
    matches: list[MatchResult] = field(default_factory=list)


def _ap_from_flags(flags: list[bool], gt_count: int) -> float:
    """101-point interpolated average precision from ordered match flags."""
    tp = 0
    fp = 0
    recalls: list[float] = []
    precisions: list[float] = []
    for matched in flags:
        if matched:
            tp += 1
        else:
            fp += 1
        recalls.append(tp / gt_count)
        precisions.append(tp / (tp + fp))
    # precision envelope: best precision at recall >= r
    best = 0.0
    envelope = [0.0] * len(precisions)
    for i in range(len(precisions) - 1, -1, -1):
        best = max(best, precisions[i])
        envelope[i] = best
    total = 0.0
    j = 0
    for r in RECALL_POINTS:
        while j < len(recalls) and recalls[j] < r:
            j += 1
        total += envelope[j] if j < len(recalls) else 0.0
    return total / len(RECALL_POINTS)


def evaluate_map(detections: Sequence, ground_truth: Sequence) -> MapResult:
    """Mean average precision over categories and IoU thresholds."""
    gt_by_cat_image: dict[str, dict[str, list]] = {}
    gt_counts: dict[str, int] = {}
    for gt in ground_truth:
        gt_by_cat_image.setdefault(gt.category, {}).setdefault(gt.item_id, []).append(gt)
        gt_counts[gt.category] = gt_counts.get(gt.category, 0) + 1

    dets_by_cat: dict[str, list[tuple[int, object]]] = {}
    for index, det in enumerate(detections):
        if not 0.0 <= det.score <= 1.0:
            raise ValidationError(
                f"detection {index} has score {det.score} outside [0, 1]"
            )
        dets_by_cat.setdefault(det.category, []).append((index, det))

    fp_only = sorted(set(dets_by_cat) - set(gt_counts))
    categories = sorted(gt_counts)
    ap_table: dict[str, dict[float, float]] = {}
    match_results: list[MatchResult] = []
    for category in categories:
        ordered = sorted(
            dets_by_cat.get(category, []), key=lambda p: (-p[1].score, p[0])
        )
        kept = []
        per_image: dict[str, int] = {}
        for index, det in ordered:
            seen = per_image.get(det.item_id, 0)
            if seen < MAX_DETECTIONS_PER_IMAGE:
                kept.append((index, det))
                per_image[det.item_id] = seen + 1
        gt_images = gt_by_cat_image.get(category, {})
        ap_table[category] = {}
        for threshold in IOU_THRESHOLDS:
            matched: set[tuple[str, int]] = set()
            flags = []
            entries: dict[str, list[tuple[int, int | None, float]]] = {}
            for index, det in kept:
                best_index = -1
                best_iou = 0.0
                for gi, gt in enumerate(gt_images.get(det.item_id, [])):
                    if (det.item_id, gi) in matched:
                        continue
                    overlap = iou(det.box, gt.box)
                    if overlap >= threshold and overlap > best_iou:
                        best_index = gi
                        best_iou = overlap
                if best_index >= 0:
                    matched.add((det.item_id, best_index))
                    flags.append(True)
                    entries.setdefault(det.item_id, []).append(
                        (index, best_index, best_iou)
                    )
                else:
                    flags.append(False)
                    entries.setdefault(det.item_id, []).append((index, None, 0.0))
            ap_table[category][threshold] = _ap_from_flags(flags, gt_counts[category])
            for item_id in sorted(entries):
                match_results.append(
                    MatchResult(item_id, category, threshold, tuple(entries[item_id]))
                )

    per_threshold = {}
    for threshold in IOU_THRESHOLDS:
        if categories:
            per_threshold[threshold] = sum(
                ap_table[c][threshold] for c in categories
            ) / len(categories)
        else:
            per_threshold[threshold] = 0.0
    overall = sum(per_threshold[t] for t in IOU_THRESHOLDS) / len(IOU_THRESHOLDS)
    return MapResult(overall, per_threshold, ap_table, fp_only, match_results)


# ---------------------------------------------------------------------------
# MOTA


@dataclass
class MotaResult:
    mota: float | None  # None when there is no ground truth to score against
    misses: int
    false_positives: int
    id_switches: int
    gt_total: int


def evaluate_mota(tracked: Sequence, ground_truth: Sequence) -> MotaResult:
    for gt in ground_truth:
        if gt.track_id is None or gt.frame_index is None:
            raise ValidationError("MOTA ground truth needs track_id and frame_index")
    frames = sorted(
        {gt.frame_index for gt in ground_truth} | {t.frame_index for t in tracked}
    )
    gt_by_frame: dict[int, list] = {f: [] for f in frames}
    tr_by_frame: dict[int, list] = {f: [] for f in frames}
    for gt in ground_truth:
        gt_by_frame[gt.frame_index].append(gt)
    for t in tracked:
        tr_by_frame[t.frame_index].append(t)

    misses = false_positives = id_switches = gt_total = 0
    last_assignment: dict[int, int] = {}  # gt track -> tracker track, latest
    active: dict[int, int] = {}  # correspondences alive from previous frame

    for frame in frames:
        gts = gt_by_frame[frame]
        trs = tr_by_frame[frame]
        gt_total += len(gts)
        gt_ids = [g.track_id for g in gts]
        tr_ids = [t.track_id for t in trs]
        if len(set(gt_ids)) != len(gt_ids) or len(set(tr_ids)) != len(tr_ids):
            raise ValidationError(f"duplicate track id in frame {frame}")
        matches: dict[int, int] = {}

        # keep correspondences that still overlap
        for gi, gt in enumerate(gts):
            tid = active.get(gt.track_id)
            if tid is None or tid not in tr_ids or tid in matches.values():
                continue
            ti = tr_ids.index(tid)
            if iou(gt.box, trs[ti].box) >= MOTA_IOU:
                matches[gt.track_id] = tid

        free_g = [gi for gi, g in enumerate(gts) if g.track_id not in matches]
        free_t = [ti for ti, t in enumerate(trs) if t.track_id not in matches.values()]
        if free_g and free_t:
            blocked = 1e6
            cost = np.full((len(free_g), len(free_t)), blocked, dtype=np.float64)
            for a, gi in enumerate(free_g):
                for b, ti in enumerate(free_t):
                    overlap = iou(gts[gi].box, trs[ti].box)
                    if overlap >= MOTA_IOU:
                        # the tiny index term resolves equal-IoU ties toward
                        # lower (gt index, tracker index) deterministically
                        cost[a, b] = 1.0 - overlap + 1e-12 * (
                            gi * (len(trs) + 1) + ti
                        )
            rows, cols = linear_sum_assignment(cost)
            for a, b in zip(rows, cols):
                if cost[a, b] < blocked:
                    matches[gts[free_g[a]].track_id] = trs[free_t[b]].track_id

        for gt_tid, tr_tid in matches.items():
            previous = last_assignment.get(gt_tid)
            if previous is not None and previous != tr_tid:
                id_switches += 1
            last_assignment[gt_tid] = tr_tid

        misses += len(gts) - len(matches)
        false_positives += len(trs) - len(matches)
        active = dict(matches)

    if gt_total == 0:
        return MotaResult(None, misses, false_positives, id_switches, 0)
    mota = 1.0 - (misses + false_positives + id_switches) / gt_total
    return MotaResult(mota, misses, false_positives, id_switches, gt_total)


# ---------------------------------------------------------------------------
# rate aggregation and curves


@dataclass(frozen=True)
class RateRecord:
    item_id: str
    bits: int

    def __post_init__(self):
        if self.bits < 0:
            raise ValidationError(f"negative bit count for item {self.item_id!r}")


class RateDataset(Protocol):
    """What compute_rate needs to know about a dataset."""

    kind: str
    items: list[str]
    frame_rate: float | None

    def pixel_count(self, item_id: str) -> int: ...


def compute_rate(records: Sequence[RateRecord], dataset: RateDataset) -> float:
    """Images aggregate to bits per pixel; video to kilobits per second."""
    by_item: dict[str, int] = {}
    for record in records:
        if record.item_id in by_item:
            raise ValidationError(f"duplicate rate record for item {record.item_id!r}")
        by_item[record.item_id] = record.bits
    missing = [item for item in dataset.items if item not in by_item]
    if missing:
        raise IncompleteRunError(missing)
    extra = sorted(set(by_item) - set(dataset.items))
    if extra:
        raise ValidationError("rate records for unknown items: " + ", ".join(extra))
    total_bits = sum(by_item.values())
    if dataset.kind == "video_sequence":
        assert dataset.frame_rate is not None
        return total_bits * dataset.frame_rate / (len(dataset.items) * 1000.0)
    total_pixels = sum(dataset.pixel_count(item) for item in dataset.items)
    return total_bits / total_pixels


@dataclass(frozen=True)
class RatePoint:
    qp: int
    rate: float
    accuracy: float
    label: str = ""

    def __post_init__(self):
        if not (math.isfinite(self.rate) and self.rate > 0):
            raise ValidationError(f"rate must be positive and finite, got {self.rate}")
        if not math.isfinite(self.accuracy):
            raise ValidationError("accuracy must be finite")


@dataclass
class RateAccuracyCurve:
    label: str
    points: list[RatePoint] = field(default_factory=list)

    def __post_init__(self):
        qps = [p.qp for p in self.points]
        if qps != sorted(qps, reverse=True):
            raise ValidationError("curve points must be in descending qp order")
        if len(set(qps)) != len(qps):
            raise ValidationError("curve holds duplicate qp values")


# ---------------------------------------------------------------------------
# BD-rate


class MonotoneCubicInterpolator:
    """Piecewise cubic Hermite with monotone slopes (Fritsch-Carlson)."""

    def __init__(self, x: Sequence[float], y: Sequence[float]):
        x = np.asarray(x, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64)
        if len(x) < 2 or np.any(np.diff(x) <= 0):
            raise ValidationError("interpolation knots must be strictly increasing")
        h = np.diff(x)
        d = np.diff(y) / h
        m = np.empty(len(x))
        m[0] = d[0]
        m[-1] = d[-1]
        m[1:-1] = (d[:-1] + d[1:]) / 2.0
        for k in range(len(d)):
            if d[k] == 0.0:
                m[k] = 0.0
                m[k + 1] = 0.0
        for k in range(len(d)):
            if d[k] == 0.0:
                continue
            a = m[k] / d[k]
            b = m[k + 1] / d[k]
            if a < 0.0:
                m[k] = 0.0
                a = 0.0
            if b < 0.0:
                m[k + 1] = 0.0
                b = 0.0
            s = a * a + b * b
            if s > 9.0:
                t = 3.0 / math.sqrt(s)
                m[k] = t * a * d[k]
                m[k + 1] = t * b * d[k]
        self._x, self._y, self._m, self._h = x, y, m, h

    def __call__(self, xq: np.ndarray | float) -> np.ndarray:
        xq = np.asarray(xq, dtype=np.float64)
        idx = np.clip(np.searchsorted(self._x, xq, side="right") - 1, 0, len(self._h) - 1)
        t = (xq - self._x[idx]) / self._h[idx]
        t2 = t * t
        t3 = t2 * t
        h00 = 2 * t3 - 3 * t2 + 1
        h10 = t3 - 2 * t2 + t
        h01 = -2 * t3 + 3 * t2
        h11 = t3 - t2
        return (
            h00 * self._y[idx]
            + h10 * self._h[idx] * self._m[idx]
            + h01 * self._y[idx + 1]
            + h11 * self._h[idx] * self._m[idx + 1]
        )


def _curve_knots(curve: RateAccuracyCurve) -> tuple[np.ndarray, np.ndarray]:
    if len(curve.points) < MIN_BD_POINTS:
        raise ValidationError(
            f"curve {curve.label!r} has {len(curve.points)} points; "
            f"BD-rate needs at least {MIN_BD_POINTS}"
        )
    pts = sorted(curve.points, key=lambda p: p.accuracy)
    for left, right in zip(pts, pts[1:]):
        if right.accuracy <= left.accuracy:
            raise CurveMonotonicityError(
                f"curve {curve.label!r}: accuracy {right.accuracy} at qp {right.qp} "
                f"does not exceed accuracy {left.accuracy} at qp {left.qp}"
            )
    acc = np.array([p.accuracy for p in pts])
    rate = np.array([p.rate for p in pts])
    return acc, np.log10(rate)


def bd_rate(anchor: RateAccuracyCurve, test: RateAccuracyCurve) -> float:
    """Average rate difference (percent) of test over anchor at equal accuracy."""
    ax, ay = _curve_knots(anchor)
    tx, ty = _curve_knots(test)
    lo = max(ax[0], tx[0])
    hi = min(ax[-1], tx[-1])
    if not lo < hi:
        raise CurveOverlapError(
            f"curves {anchor.label!r} and {test.label!r} share no accuracy interval "
            f"(anchor [{ax[0]}, {ax[-1]}], test [{tx[0]}, {tx[-1]}])"
        )
    xs = np.linspace(lo, hi, BD_SAMPLES)
    anchor_integral = np.trapezoid(MonotoneCubicInterpolator(ax, ay)(xs), xs)
    test_integral = np.trapezoid(MonotoneCubicInterpolator(tx, ty)(xs), xs)
    avg_diff = (test_integral - anchor_integral) / (hi - lo)
    return (10.0**avg_diff - 1.0) * 100.0


# ---------------------------------------------------------------------------
# interchange formats


def _float_repr(v: float) -> str:
    # shortest form that parses back to the identical float
    return repr(float(v))


def write_curve_csv(path: str | Path, curves: Iterable[RateAccuracyCurve]) -> None:
    lines = ["label,qp,rate,accuracy"]
    for curve in curves:
        if "," in curve.label:
            raise ValidationError(f"curve label {curve.label!r} must not contain commas")
        for p in curve.points:
            lines.append(
                f"{curve.label},{p.qp},{_float_repr(p.rate)},{_float_repr(p.accuracy)}"
            )
    Path(path).write_text("\n".join(lines) + "\n")


def read_curve_csv(path: str | Path) -> list[RateAccuracyCurve]:
    text = Path(path).read_text()
    lines = [ln for ln in text.split("\n") if ln.strip()]
    if not lines or lines[0] != "label,qp,rate,accuracy":
        raise ValidationError(f"{path}: missing curve CSV header")
    grouped: dict[str, list[RatePoint]] = {}
    for ln in lines[1:]:
        parts = ln.split(",")
        if len(parts) != 4:
            raise ValidationError(f"{path}: malformed row {ln!r}")
        label, qp, rate, accuracy = parts
        grouped.setdefault(label, []).append(
            RatePoint(int(qp), float(rate), float(accuracy), label)
        )
    return [RateAccuracyCurve(label, points) for label, points in grouped.items()]


def write_detections_jsonl(path: str | Path, detections: Iterable) -> None:
    lines = []
    for det in detections:
        record: dict = {
            "item_id": det.item_id,
            "category": det.category,
            "box": [float(v) for v in det.box],
            "score": det.score,
        }
        frame_index = getattr(det, "frame_index", None)
        if frame_index is not None:
            record["frame"] = frame_index
            record["track_id"] = det.track_id
        lines.append(json.dumps(record, separators=(",", ":")))
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""))


def read_detections_jsonl(path: str | Path) -> list:
    # imported here: backends depends on this module for iou
    from .backends import Detection, TrackedBox

    out = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        if not line.strip():
            continue
        try:
            record = json.loads(line)
            box = tuple(float(v) for v in record["box"])
            if "track_id" in record:
                out.append(
                    TrackedBox(
                        record["item_id"],
                        int(record["frame"]),
                        int(record["track_id"]),
                        record["category"],
                        box,
                        float(record["score"]),
                    )
                )
            else:
                out.append(
                    Detection(record["item_id"], record["category"], box, float(record["score"]))
                )
        except (ValueError, KeyError, TypeError) as exc:
            raise ValidationError(f"{path}:{lineno}: malformed detection line") from exc
    return out
