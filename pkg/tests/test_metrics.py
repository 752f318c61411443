"""Task metrics and curve comparison, checked against independent oracles.

brute_force_map below recomputes the detection metric straight from its
definition (sort, greedy match, precision envelope at 101 recall points)
with none of the vectorized machinery of the implementation, so agreement
is meaningful.
"""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from vcbench import (
    Detection,
    GroundTruthObject,
    RateAccuracyCurve,
    RatePoint,
    RateRecord,
    TrackedBox,
    bd_rate,
    compute_rate,
    evaluate_map,
    evaluate_mota,
    iou,
    read_curve_csv,
    read_detections_jsonl,
    write_curve_csv,
    write_detections_jsonl,
)
from vcbench.errors import (
    CurveMonotonicityError,
    CurveOverlapError,
    IncompleteRunError,
    ValidationError,
)
from vcbench.metrics import IOU_THRESHOLDS, MonotoneCubicInterpolator

# -- independent mAP oracle --------------------------------------------------


def brute_force_map(detections, ground_truth):
    """COCO-protocol mAP computed directly from the definition."""
    categories = sorted({g.category for g in ground_truth})
    if not categories:
        return 0.0
    threshold_means = []
    for threshold in IOU_THRESHOLDS:
        aps = []
        for category in categories:
            gts = [g for g in ground_truth if g.category == category]
            dets = [d for d in detections if d.category == category]
            # stable sort keeps insertion order among equal scores
            dets = sorted(dets, key=lambda d: -d.score)
            flags = []
            matched = set()
            for d in dets:
                best, best_iou = None, 0.0
                for gi, g in enumerate(gts):
                    if gi in matched or g.item_id != d.item_id:
                        continue
                    v = iou(d.box, g.box)
                    if v >= threshold and v > best_iou:
                        best, best_iou = gi, v
                if best is None:
                    flags.append(False)
                else:
                    matched.add(best)
                    flags.append(True)
            precisions, recalls = [], []
            tp = 0
            for rank, is_tp in enumerate(flags, start=1):
                tp += int(is_tp)
                precisions.append(tp / rank)
                recalls.append(tp / len(gts))
            ap = 0.0
            for r in [i / 100.0 for i in range(101)]:
                candidates = [p for p, rec in zip(precisions, recalls) if rec >= r - 1e-12]
                ap += max(candidates) if candidates else 0.0
            aps.append(ap / 101.0)
        threshold_means.append(sum(aps) / len(aps))
    return sum(threshold_means) / len(threshold_means)


def gt(item, box, category="object", **kw):
    return GroundTruthObject(item, category, box, **kw)


def det(item, box, score, category="object"):
    return Detection(item, category, box, score)


class TestIou:
    def test_identical(self):
        assert iou((0, 0, 10, 10), (0, 0, 10, 10)) == 1.0

    def test_disjoint(self):
        assert iou((0, 0, 10, 10), (20, 20, 30, 30)) == 0.0

    def test_half_overlap_thirds(self):
        assert iou((0, 0, 10, 10), (5, 0, 15, 10)) == pytest.approx(1 / 3)

    def test_degenerate_box_is_zero(self):
        assert iou((5, 5, 5, 9), (0, 0, 10, 10)) == 0.0

    def test_touching_edges_are_disjoint(self):
        assert iou((0, 0, 10, 10), (10, 0, 20, 10)) == 0.0


class TestEvaluateMap:
    def test_perfect_single_detection(self):
        r = evaluate_map([det("a", (0, 0, 10, 10), 0.9)], [gt("a", (0, 0, 10, 10))])
        assert r.map == 1.0

    def test_no_detections(self):
        r = evaluate_map([], [gt("a", (0, 0, 10, 10))])
        assert r.map == 0.0

    def test_averaged_threshold_example(self):
        # det A true at IoU 0.8 (passes 7 of 10 thresholds), det B never true
        ground = [gt("a", (0, 0, 10, 10))]
        dets = [
            det("a", (0, 2, 10, 10), 0.9),   # IoU 0.8
            det("a", (0, 8, 10, 10), 0.8),   # IoU 0.2
        ]
        r = evaluate_map(dets, ground)
        assert r.per_threshold[0.50] == 1.0
        assert r.per_threshold[0.80] == 1.0
        assert r.per_threshold[0.85] == 0.0
        assert r.map == pytest.approx(0.7, abs=1e-12)

    def test_fp_only_category_excluded_and_reported(self):
        ground = [gt("a", (0, 0, 10, 10), "boat")]
        dets = [
            det("a", (0, 0, 10, 10), 0.9, "boat"),
            det("a", (20, 20, 30, 30), 0.8, "ghost"),
        ]
        r = evaluate_map(dets, ground)
        assert r.map == 1.0
        assert r.fp_only_categories == ["ghost"]

    def test_score_out_of_range_rejected(self):
        with pytest.raises(ValidationError, match="score"):
            evaluate_map([det("a", (0, 0, 4, 4), 1.5)], [gt("a", (0, 0, 4, 4))])

    def test_hundred_detection_cap_per_image(self):
        # 100 far-away FPs outrank the single matching detection; the cap
        # drops the lowest-scored detection, which is the only true one
        ground = [gt("a", (0, 0, 10, 10))]
        dets = [det("a", (200 + i, 0, 210 + i, 10), 0.9) for i in range(100)]
        dets.append(det("a", (0, 0, 10, 10), 0.1))
        r = evaluate_map(dets, ground)
        assert r.map == 0.0

    def test_matches_brute_force_on_random_scenes(self):
        rng = np.random.default_rng(123)
        for scene in range(100):
            items = ["a", "b"][: int(rng.integers(1, 3))]
            cats = ["x", "y"][: int(rng.integers(1, 3))]
            ground, dets = [], []
            for _ in range(int(rng.integers(1, 5))):
                x, y = rng.uniform(0, 30, 2)
                w, h = rng.uniform(2, 20, 2)
                ground.append(
                    gt(str(rng.choice(items)), (x, y, x + w, y + h), str(rng.choice(cats)))
                )
            for _ in range(int(rng.integers(0, 7))):
                if ground and rng.random() < 0.7:
                    base = ground[int(rng.integers(0, len(ground)))]
                    x1, y1, x2, y2 = base.box
                    dx, dy = rng.uniform(-4, 4, 2)
                    box = (x1 + dx, y1 + dy, x2 + dx, y2 + dy)
                    item, cat = base.item_id, base.category
                else:
                    x, y = rng.uniform(0, 30, 2)
                    w, h = rng.uniform(2, 20, 2)
                    box = (x, y, x + w, y + h)
                    item, cat = str(rng.choice(items)), str(rng.choice(cats))
                dets.append(det(item, box, round(float(rng.uniform(0.05, 0.95)), 3), cat))
            got = evaluate_map(dets, ground).map
            want = brute_force_map(dets, ground)
            assert got == pytest.approx(want, abs=1e-12), f"scene {scene}"

    def test_adding_lowest_score_fp_never_raises_ap(self):
        rng = np.random.default_rng(7)
        for _ in range(20):
            ground = [gt("a", (0, 0, 10, 10)), gt("a", (20, 20, 34, 34))]
            dets = [
                det("a", (0, 0, 10, 10), 0.8),
                det("a", (float(rng.uniform(0, 30)), 0, float(rng.uniform(31, 60)), 10), 0.5),
            ]
            base = evaluate_map(dets, ground)
            worse = evaluate_map(
                dets + [det("a", (50, 50, 60, 60), 0.01)], ground
            )
            for t in IOU_THRESHOLDS:
                assert worse.per_threshold[t] <= base.per_threshold[t] + 1e-12

    def test_ties_broken_by_insertion_order(self):
        # two detections share a score; the earlier one must match first
        ground = [gt("a", (0, 0, 10, 10))]
        first = det("a", (0, 0, 10, 10), 0.5)
        second = det("a", (0, 1, 10, 10), 0.5)
        r = evaluate_map([first, second], ground)
        (match,) = [m for m in r.matches if m.threshold == 0.50]
        matched_det_indices = [e[0] for e in match.entries if e[1] is not None]
        assert matched_det_indices == [0]


def tbox(frame, tid, box):
    return TrackedBox(f"frame_{frame:06d}", frame, tid, "object", box, 0.9)


def tgt(frame, tid, box):
    return GroundTruthObject(
        f"frame_{frame:06d}", "object", box, track_id=tid, frame_index=frame
    )


class TestEvaluateMota:
    def test_perfect_tracking(self):
        ground = [tgt(f, 0, (0, 0, 10, 10)) for f in range(5)]
        tracked = [tbox(f, 7, (0, 0, 10, 10)) for f in range(5)]
        r = evaluate_mota(tracked, ground)
        assert r.mota == 1.0
        assert (r.misses, r.false_positives, r.id_switches) == (0, 0, 0)

    def test_point_eight_fixture(self):
        # 10 GT boxes: two objects over five frames; one miss, one FP
        ground = [tgt(f, 0, (0, 0, 10, 10)) for f in range(5)]
        ground += [tgt(f, 1, (30, 30, 42, 42)) for f in range(5)]
        tracked = [tbox(f, 0, (0, 0, 10, 10)) for f in range(5)]
        tracked += [tbox(f, 1, (30, 30, 42, 42)) for f in range(4)]  # miss at f=4
        tracked.append(tbox(0, 9, (70, 70, 80, 80)))  # far-away FP
        r = evaluate_mota(tracked, ground)
        assert (r.misses, r.false_positives, r.id_switches) == (1, 1, 0)
        assert r.mota == pytest.approx(0.8)

    def test_crossing_swap_counts_two_switches(self):
        # two objects cross; tracker ids exchange trajectories at frame 2
        a_x = [0, 12, 24, 36]
        b_x = [36, 24, 12, 0]
        ground, tracked = [], []
        for f in range(4):
            ground.append(tgt(f, 0, (a_x[f], 0, a_x[f] + 16, 16)))
            ground.append(tgt(f, 1, (b_x[f], 0, b_x[f] + 16, 16)))
        swap = {0: [0, 0, 1, 1], 1: [1, 1, 0, 0]}
        for f in range(4):
            tracked.append(tbox(f, swap[0][f], (a_x[f], 0, a_x[f] + 16, 16)))
            tracked.append(tbox(f, swap[1][f], (b_x[f], 0, b_x[f] + 16, 16)))
        r = evaluate_mota(tracked, ground)
        assert r.id_switches == 2
        assert (r.misses, r.false_positives) == (0, 0)
        assert r.mota == pytest.approx(0.75)

    def test_correspondence_kept_across_jitter(self):
        # drifting boxes stay matched to their track while IoU >= 0.5
        ground = [tgt(f, 0, (0, 0, 20, 20)) for f in range(4)]
        tracked = [tbox(f, 3, (f, 0, 20 + f, 20)) for f in range(4)]
        r = evaluate_mota(tracked, ground)
        assert r.id_switches == 0
        assert r.mota == 1.0

    def test_empty_ground_truth_has_no_value(self):
        r = evaluate_mota([tbox(0, 0, (0, 0, 4, 4))], [])
        assert r.mota is None
        assert r.false_positives == 1
        assert r.gt_total == 0

    def test_duplicate_track_id_in_frame_rejected(self):
        tracked = [tbox(0, 5, (0, 0, 4, 4)), tbox(0, 5, (8, 8, 12, 12))]
        with pytest.raises(ValidationError, match="duplicate track id"):
            evaluate_mota(tracked, [tgt(0, 0, (0, 0, 4, 4))])

    def test_breakdown_identity_on_random_scenes(self):
        rng = np.random.default_rng(31)
        for _ in range(25):
            ground, tracked = [], []
            for f in range(int(rng.integers(1, 5))):
                for tid in range(int(rng.integers(0, 3))):
                    x = float(rng.uniform(0, 50))
                    ground.append(tgt(f, tid, (x, 0, x + 10, 10)))
                for tid in range(int(rng.integers(0, 3))):
                    x = float(rng.uniform(0, 50))
                    tracked.append(tbox(f, tid, (x, 0, x + 10, 10)))
            r = evaluate_mota(tracked, ground)
            if r.gt_total == 0:
                assert r.mota is None
            else:
                want = 1.0 - (r.misses + r.false_positives + r.id_switches) / r.gt_total
                assert r.mota == pytest.approx(want, abs=1e-12)


def curve(label, rates, accuracies, qps=None):
    qps = qps or list(range(40, 40 - 6 * len(rates), -6))
    return RateAccuracyCurve(
        label,
        [RatePoint(qp, r, a) for qp, r, a in zip(qps, rates, accuracies)],
    )


ANCHOR = curve("anchor", [100.0, 200.0, 400.0, 800.0], [0.4, 0.6, 0.8, 0.9])


class TestBdRate:
    def test_identity_is_zero(self):
        assert abs(bd_rate(ANCHOR, ANCHOR)) < 1e-9

    def test_rate_halving_is_minus_fifty(self):
        half = curve("half", [50.0, 100.0, 200.0, 400.0], [0.4, 0.6, 0.8, 0.9])
        assert bd_rate(ANCHOR, half) == pytest.approx(-50.0, abs=1e-6)

    def test_scaling_law(self):
        for c in (0.25, 0.8, 1.5, 3.0):
            scaled = curve(
                "scaled", [r * c for r in (100.0, 200.0, 400.0, 800.0)],
                [0.4, 0.6, 0.8, 0.9],
            )
            assert bd_rate(ANCHOR, scaled) == pytest.approx((c - 1) * 100.0, abs=1e-6)

    def test_four_point_fixture_matches_fine_integration(self):
        test = curve("test", [80.0, 150.0, 350.0, 700.0], [0.4, 0.6, 0.8, 0.9])
        got = bd_rate(ANCHOR, test)
        assert got < 0.0

        # oracle: the same interpolant integrated at 10^6 points
        lo, hi = 0.4, 0.9
        xs = np.linspace(lo, hi, 1_000_000)
        fa = MonotoneCubicInterpolator(
            [0.4, 0.6, 0.8, 0.9], [np.log10(r) for r in (100.0, 200.0, 400.0, 800.0)]
        )
        ft = MonotoneCubicInterpolator(
            [0.4, 0.6, 0.8, 0.9], [np.log10(r) for r in (80.0, 150.0, 350.0, 700.0)]
        )
        avg_diff = np.trapezoid(ft(xs) - fa(xs), xs) / (hi - lo)
        want = (10.0 ** avg_diff - 1.0) * 100.0
        assert got == pytest.approx(want, abs=5e-5)

    def test_antisymmetry_of_sign(self):
        test = curve("test", [80.0, 150.0, 350.0, 700.0], [0.4, 0.6, 0.8, 0.9])
        forward = bd_rate(ANCHOR, test)
        backward = bd_rate(test, ANCHOR)
        assert forward * backward < 0.0

    def test_needs_four_points(self):
        short = curve("short", [1.0, 2.0, 3.0], [0.1, 0.2, 0.3])
        with pytest.raises(ValidationError, match="4"):
            bd_rate(short, ANCHOR)

    def test_duplicate_accuracy_names_points(self):
        flat = curve("flat", [1.0, 2.0, 3.0, 4.0], [0.1, 0.2, 0.2, 0.3])
        with pytest.raises(CurveMonotonicityError, match="0.2"):
            bd_rate(ANCHOR, flat)

    def test_no_overlap_names_intervals(self):
        low = curve("low", [1.0, 2.0, 3.0, 4.0], [0.1, 0.15, 0.2, 0.25])
        with pytest.raises(CurveOverlapError, match="0.4"):
            bd_rate(ANCHOR, low)

    def test_partial_overlap_uses_common_interval(self):
        shifted = curve("s", [90.0, 180.0, 360.0, 720.0], [0.5, 0.7, 0.85, 0.95])
        value = bd_rate(ANCHOR, shifted)
        assert np.isfinite(value)


class TestInterpolator:
    def test_passes_through_knots(self):
        f = MonotoneCubicInterpolator([0.0, 1.0, 2.0, 4.0], [1.0, 3.0, 4.0, 10.0])
        for x, y in [(0, 1), (1, 3), (2, 4), (4, 10)]:
            assert f(np.array([x]))[0] == pytest.approx(y, abs=1e-12)

    def test_monotone_data_stays_monotone(self):
        f = MonotoneCubicInterpolator([0.0, 0.1, 0.5, 0.6, 1.0], [0.0, 2.0, 2.1, 5.0, 5.5])
        xs = np.linspace(0.0, 1.0, 5000)
        ys = f(xs)
        assert (np.diff(ys) >= -1e-12).all()

    def test_linear_data_reproduced_exactly(self):
        f = MonotoneCubicInterpolator([0.0, 1.0, 2.0, 3.0], [1.0, 2.0, 3.0, 4.0])
        xs = np.linspace(0.0, 3.0, 100)
        assert np.allclose(f(xs), xs + 1.0, atol=1e-12)


class _StubDataset:
    def __init__(self, kind, items, frame_rate=None, pixels=0):
        self.kind = kind
        self.items = items
        self.frame_rate = frame_rate
        self._pixels = pixels

    def pixel_count(self, item_id):
        return self._pixels


class TestComputeRate:
    def test_image_bits_per_pixel(self):
        items = [f"item_{i:06d}" for i in range(10)]
        records = [RateRecord(i, 4096) for i in items]
        ds = _StubDataset("image_set", items, pixels=64 * 64)
        assert compute_rate(records, ds) == pytest.approx(1.0)

    def test_video_kilobits_per_second(self):
        items = [f"frame_{i:06d}" for i in range(30)]
        records = [RateRecord(i, 10000) for i in items]
        ds = _StubDataset("video_sequence", items, frame_rate=30.0)
        assert compute_rate(records, ds) == pytest.approx(300.0)

    def test_missing_record_names_item(self):
        items = [f"item_{i:06d}" for i in range(10)]
        records = [RateRecord(i, 4096) for i in items[:9]]
        ds = _StubDataset("image_set", items, pixels=64 * 64)
        with pytest.raises(IncompleteRunError) as exc:
            compute_rate(records, ds)
        assert exc.value.missing == ["item_000009"]

    def test_duplicate_record_rejected(self):
        ds = _StubDataset("image_set", ["a"], pixels=16)
        with pytest.raises(ValidationError, match="duplicate"):
            compute_rate([RateRecord("a", 8), RateRecord("a", 8)], ds)

    def test_unknown_record_rejected(self):
        ds = _StubDataset("image_set", ["a"], pixels=16)
        with pytest.raises(ValidationError, match="ghost"):
            compute_rate([RateRecord("a", 8), RateRecord("ghost", 8)], ds)


class TestCurveContainers:
    def test_rate_must_be_positive(self):
        with pytest.raises(ValidationError, match="rate"):
            RatePoint(10, 0.0, 0.5)

    def test_qps_must_descend(self):
        with pytest.raises(ValidationError, match="descending"):
            RateAccuracyCurve("x", [RatePoint(10, 1.0, 0.5), RatePoint(20, 2.0, 0.6)])

    def test_csv_roundtrip(self, tmp_path):
        curves = [
            ANCHOR,
            curve("other", [1.5, 2.25, 4.0, 8.0], [0.41, 0.62, 0.83, 0.94]),
        ]
        p = tmp_path / "curves.csv"
        write_curve_csv(p, curves)
        back = read_curve_csv(p)
        assert [c.label for c in back] == ["anchor", "other"]
        for a, b in zip(curves, back):
            assert [(pt.qp, pt.rate, pt.accuracy) for pt in a.points] == [
                (pt.qp, pt.rate, pt.accuracy) for pt in b.points
            ]

    def test_label_with_comma_rejected(self, tmp_path):
        bad = curve("a,b", [1.0, 2.0, 3.0, 4.0], [0.1, 0.2, 0.3, 0.4])
        with pytest.raises(ValidationError, match="comma"):
            write_curve_csv(tmp_path / "x.csv", [bad])


class TestDetectionsJsonl:
    def test_roundtrip_detections(self, tmp_path):
        dets = [
            Detection("item_000000", "object", (1.0, 2.0, 3.5, 4.5), 0.875),
            Detection("item_000001", "boat", (0.0, 0.0, 8.0, 8.0), 0.5),
        ]
        p = tmp_path / "d.jsonl"
        write_detections_jsonl(p, dets)
        back = read_detections_jsonl(p)
        assert [(d.item_id, d.category, d.box, d.score) for d in back] == [
            (d.item_id, d.category, d.box, d.score) for d in dets
        ]

    def test_roundtrip_tracked(self, tmp_path):
        boxes = [
            TrackedBox("frame_000002", 2, 5, "object", (1.0, 2.0, 3.0, 4.0), 0.25),
        ]
        p = tmp_path / "t.jsonl"
        write_detections_jsonl(p, boxes)
        (back,) = read_detections_jsonl(p)
        assert back.frame_index == 2
        assert back.track_id == 5


@settings(max_examples=30, deadline=None)
@given(st.floats(min_value=0.05, max_value=20.0))
def test_bd_scaling_property(c):
    scaled = curve(
        "scaled", [r * c for r in (100.0, 200.0, 400.0, 800.0)], [0.4, 0.6, 0.8, 0.9]
    )
    assert bd_rate(ANCHOR, scaled) == pytest.approx((c - 1) * 100.0, abs=1e-6)
