"""Acceptance gate: one test per top-level criterion, each with a runtime
budget. Every test prints a single PASS line; a failure names the criterion.

The end-to-end fixture freezes exact accuracy values from a reference run.
Those literals guard against silent behavior drift; the structural claims
(lossless parity, strict degradation, rate ordering, reproducibility) are
asserted independently of them.
"""

import hashlib
import json
import time
from contextlib import contextmanager

import numpy as np
import pytest
import yaml

from test_codecs import GOLDEN_DIGESTS, golden_inputs
from test_metrics import ANCHOR, brute_force_map, curve, det, gt, tbox, tgt

from vcbench import (
    CodecParams,
    FeatureTensor,
    FeatureTensorSet,
    SyntheticSceneSpec,
    bd_rate,
    decode,
    distortion_bound,
    encode_reference,
    evaluate_map,
    evaluate_mota,
    generate_synthetic_dataset,
    mono_to_rgb,
    pack,
    run_config_file,
    unpack,
    write_ppm,
)
from vcbench.backends import builtin_serve_command
from vcbench.conformance import run_conformance
from vcbench.frames import PlanarFrame
from vcbench.metrics import MonotoneCubicInterpolator
from vcbench.packing import grid_geometry, zero_code


@contextmanager
def criterion(label, budget_s):
    start = time.perf_counter()
    yield
    elapsed = time.perf_counter() - start
    assert elapsed < budget_s, f"{label}: took {elapsed:.2f}s, budget {budget_s}s"
    print(f"[PRIMARY] {label}: PASS ({elapsed:.2f}s / budget {budget_s:g}s)")


def test_primary_bd_rate_correctness():
    with criterion("BD-rate correctness", 1.0):
        assert abs(bd_rate(ANCHOR, ANCHOR)) < 1e-9

        half = curve("half", [50.0, 100.0, 200.0, 400.0], [0.4, 0.6, 0.8, 0.9])
        assert bd_rate(ANCHOR, half) == pytest.approx(-50.0, abs=1e-6)

        for c in (0.5, 2.0, 3.7):
            scaled = curve(
                "scaled",
                [r * c for r in (100.0, 200.0, 400.0, 800.0)],
                [0.4, 0.6, 0.8, 0.9],
            )
            assert bd_rate(ANCHOR, scaled) == pytest.approx((c - 1) * 100.0, abs=1e-6)

        test = curve("test", [80.0, 150.0, 350.0, 700.0], [0.4, 0.6, 0.8, 0.9])
        xs = np.linspace(0.4, 0.9, 1_000_000)
        fa = MonotoneCubicInterpolator(
            [0.4, 0.6, 0.8, 0.9], [np.log10(r) for r in (100.0, 200.0, 400.0, 800.0)]
        )
        ft = MonotoneCubicInterpolator(
            [0.4, 0.6, 0.8, 0.9], [np.log10(r) for r in (80.0, 150.0, 350.0, 700.0)]
        )
        oracle = (10.0 ** (np.trapezoid(ft(xs) - fa(xs), xs) / 0.5) - 1.0) * 100.0
        assert round(bd_rate(ANCHOR, test), 4) == round(oracle, 4)


def test_primary_metric_oracles():
    with criterion("Metric oracles", 10.0):
        # detection metric equals a from-definition reimplementation
        rng = np.random.default_rng(123)
        for _ in range(100):
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
            assert evaluate_map(dets, ground).map == pytest.approx(
                brute_force_map(dets, ground), abs=1e-12
            )

        # one detection true at 7 of 10 overlap thresholds
        r = evaluate_map(
            [det("a", (0, 2, 10, 10), 0.9), det("a", (0, 8, 10, 10), 0.8)],
            [gt("a", (0, 0, 10, 10))],
        )
        assert r.map == pytest.approx(0.7, abs=1e-12)

        # tracking: one miss and one false positive over ten boxes
        ground = [tgt(f, 0, (0, 0, 10, 10)) for f in range(5)]
        ground += [tgt(f, 1, (30, 30, 42, 42)) for f in range(5)]
        tracked = [tbox(f, 0, (0, 0, 10, 10)) for f in range(5)]
        tracked += [tbox(f, 1, (30, 30, 42, 42)) for f in range(4)]
        tracked.append(tbox(0, 9, (70, 70, 80, 80)))
        r = evaluate_mota(tracked, ground)
        assert r.mota == pytest.approx(0.8)
        assert (r.misses, r.false_positives, r.id_switches) == (1, 1, 0)

        # tracking: identity swap during a crossing costs two switches
        a_x, b_x = [0, 12, 24, 36], [36, 24, 12, 0]
        ground, tracked = [], []
        swap = {0: [0, 0, 1, 1], 1: [1, 1, 0, 0]}
        for f in range(4):
            ground.append(tgt(f, 0, (a_x[f], 0, a_x[f] + 16, 16)))
            ground.append(tgt(f, 1, (b_x[f], 0, b_x[f] + 16, 16)))
            tracked.append(tbox(f, swap[0][f], (a_x[f], 0, a_x[f] + 16, 16)))
            tracked.append(tbox(f, swap[1][f], (b_x[f], 0, b_x[f] + 16, 16)))
        r = evaluate_mota(tracked, ground)
        assert (r.id_switches, r.mota) == (2, pytest.approx(0.75))


def test_primary_codec_bit_exactness():
    with criterion("Codec bit-exactness", 30.0):
        # frozen stream digests: 5 inputs x 3 quantizer settings
        for name, frames in golden_inputs().items():
            mode = "low_delay" if len(frames) > 1 else "all_intra"
            for qp in (4, 22, 40):
                data = encode_reference(frames, CodecParams(qp, mode, intra_period=2))
                assert (
                    hashlib.sha256(data).hexdigest() == GOLDEN_DIGESTS[(name, qp)]
                ), (name, qp)

        # distortion bound over 10^4 randomized frames
        rng = np.random.default_rng(2024)
        for i in range(10_000):
            w, h = int(rng.integers(8, 33)), int(rng.integers(8, 33))
            depth = int(rng.choice([8, 10]))
            top = (1 << depth) - 1
            plane = rng.integers(0, top + 1, size=(h, w), dtype=np.uint16)
            frame = PlanarFrame(w, h, depth, "mono_400", [plane])
            qp = int(rng.integers(0, 52))
            stream = encode_reference([frame], CodecParams(qp))
            out = decode(stream)[0]
            err = np.abs(out.planes[0].astype(int) - plane.astype(int)).max()
            assert err <= distortion_bound(qp), (i, qp)
            if qp <= 4:
                assert err == 0, (i, qp)

        # qp <= 4 lossless on full-range content at both depths
        for depth in (8, 10):
            top = (1 << depth) - 1
            plane = rng.integers(0, top + 1, size=(24, 24), dtype=np.uint16)
            frame = PlanarFrame(24, 24, depth, "mono_400", [plane])
            for qp in (0, 2, 4):
                out = decode(encode_reference([frame], CodecParams(qp)))[0]
                assert np.array_equal(out.planes[0], plane)


def test_primary_packing_roundtrip():
    with criterion("Packing roundtrip", 5.0):
        rng = np.random.default_rng(77)

        def roundtrip(shapes, bit_depth):
            tensors = [
                FeatureTensor(rng.normal(scale=3.0, size=s).astype(np.float32))
                for s in shapes
            ]
            source = FeatureTensorSet("s1", tensors)
            packed = pack(source, bit_depth)
            back = unpack(packed)
            span = max(t.values.max() for t in tensors) - min(
                t.values.min() for t in tensors
            )
            step = span / ((1 << bit_depth) - 1)
            for a, b in zip(tensors, back.tensors):
                assert a.shape == b.shape
                assert np.abs(a.values - b.values).max() <= step / 2 + 1e-6

        # the 4-scale pyramid-shaped fixture
        roundtrip([(2, 16, 16), (2, 8, 8), (2, 4, 4), (2, 2, 2)], 10)
        for _ in range(40):
            shapes = [
                (
                    int(rng.integers(1, 7)),
                    int(rng.integers(1, 9)),
                    int(rng.integers(1, 9)),
                )
                for _ in range(int(rng.integers(1, 4)))
            ]
            roundtrip(shapes, int(rng.choice([8, 10])))

        # padding cells carry the sentinel code and nothing else does when
        # the channel count falls short of the grid
        tensors = [FeatureTensor(rng.normal(size=(3, 4, 4)).astype(np.float32))]
        packed = pack(FeatureTensorSet("s1", tensors), 10)
        cols, rows = grid_geometry(3)
        assert cols * rows == 4
        plane = packed.frame.planes[0]
        pad = zero_code(packed.metadata.global_min, packed.metadata.scale, 10)
        assert (plane[4:8, 4:8] == pad).all()


def _e2e_config(work, pipeline, out_name, qps=(4, 16, 28, 40), cache=False):
    blob = {
        "config_version": 1,
        "pipeline": pipeline,
        "dataset": {
            "kind": "synthetic",
            "width": 64,
            "height": 64,
            "num_items": 20,
            "rects_per_item": 3,
            "contrast": 0.9,
            "noise_amplitude": 0.05,
            "seed": 21,
            "align": 1,
        },
        "backend": {"builtin": "synthetic"},
        "evaluator": "map",
        "output_dir": str(work / out_name),
        "cache": cache,
    }
    if pipeline != "local":
        blob["codec"] = {"kind": "reference", "qps": list(qps)}
    if pipeline == "split":
        blob["backend"]["split_tag"] = "s1"
    path = work / f"{out_name}.yaml"
    path.write_text(yaml.safe_dump(blob))
    return path


def _curve_bytes(run_dir):
    parts = [(run_dir / "curves.csv").read_bytes()]
    for p in sorted(run_dir.glob("detections_qp*.jsonl")):
        parts.append(p.read_bytes())
    return b"".join(parts)


def test_primary_end_to_end_rate_accuracy(tmp_path):
    with criterion("End-to-end rate-accuracy behavior", 120.0):
        base = run_config_file(_e2e_config(tmp_path, "local", "local"))
        assert base.baseline_accuracy == pytest.approx(0.5025567495853049, abs=1e-12)

        remote = run_config_file(_e2e_config(tmp_path, "remote", "remote"))
        split = run_config_file(_e2e_config(tmp_path, "split", "split"))

        frozen_qp40 = {
            "remote": 0.498881340419013,
            "split": 0.49844432685844964,
        }
        for outcome in (remote, split):
            points = {p.qp: p for p in outcome.curve.points}
            assert len(points) == 4, outcome.pipeline
            # unit quantizer step is lossless end to end
            assert points[4].accuracy == base.baseline_accuracy, outcome.pipeline
            # the coarsest point must genuinely cost accuracy
            assert points[40].accuracy < base.baseline_accuracy, outcome.pipeline
            assert points[40].accuracy == pytest.approx(
                frozen_qp40[outcome.pipeline], abs=1e-12
            )
            rates = [points[qp].rate for qp in (40, 28, 16, 4)]
            assert rates == sorted(rates) and len(set(rates)) == 4, outcome.pipeline

        # byte-reproducible: an independent run writes identical outputs
        again = run_config_file(_e2e_config(tmp_path, "remote", "remote_again"))
        assert _curve_bytes(remote.run_dir) == _curve_bytes(again.run_dir)

        # cache-invariant: cached and cache-hit runs write identical outputs
        cached_cfg = _e2e_config(tmp_path, "remote", "remote_cached", cache=True)
        first = run_config_file(cached_cfg)
        assert _curve_bytes(first.run_dir) == _curve_bytes(remote.run_dir)
        replay = run_config_file(cached_cfg)
        assert _curve_bytes(replay.run_dir) == _curve_bytes(remote.run_dir)


def test_primary_protocol_conformance(tmp_path):
    with criterion("Protocol conformance", 60.0):
        dataset = generate_synthetic_dataset(
            SyntheticSceneSpec(width=64, height=64, num_items=1, rects_per_item=3, seed=5)
        )
        scene = tmp_path / "scene.ppm"
        write_ppm(scene, mono_to_rgb(dataset.frames[dataset.handle.items[0]]))
        checks = run_conformance(
            builtin_serve_command("synthetic"), scene, "s1", tmp_path
        )
        assert checks == [
            "handshake",
            "infer_full",
            "tensor_count",
            "compositionality",
            "unknown_split_rejected",
            "malformed_line_recovery",
        ]
