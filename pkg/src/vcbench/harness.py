"""YAML-configured runs: local, remote, and split pipelines over a dataset.

A run loads one dataset, talks to one backend (in process or over the child
protocol), sweeps the codec over a QP list in descending order, and writes a
run directory: config snapshot, detections JSONL per point, curve CSV, plot
SVG, run record JSON, and (with the cache on) per-qp bitstreams.

Items are processed by a worker pool in which each worker owns one backend
session; results merge in item order, so worker count never changes output
bytes. Per-item failures are tolerated up to 10% of the dataset, after which
the rate point is invalidated and recorded instead of silently skipped.
"""

from __future__ import annotations

import hashlib
import json
import queue
import shutil
import tempfile
import time
from concurrent.futures import ThreadPoolExecutor
from contextlib import contextmanager
from dataclasses import dataclass, field
from importlib.metadata import PackageNotFoundError, version
from pathlib import Path

import yaml

from . import codecs
from .annotations import (
    IMAGE_SET,
    VIDEO_SEQUENCE,
    DatasetHandle,
    frame_item_id,
    parse_coco_annotations,
    parse_track_csv,
)
from .backends import (
    BUILTIN_BACKENDS,
    SPLIT_REGISTRY,
    BackendError,
    BackendSession,
    Detection,
    synthetic_tracker,
)
from .codecs import ALL_INTRA, LOW_DELAY, CodecParams
from .errors import (
    AdapterError,
    CorruptionError,
    RunError,
    ValidationError,
)
from .external_codec import ExternalCodec, ExternalCodecSpec
from .frames import (
    MONO_400,
    YUV_420,
    PlanarFrame,
    RgbImage,
    mono_to_rgb,
    read_ppm,
    read_yuv,
    write_ppm,
    yuv_to_rgb,
)
from .metrics import (
    RateAccuracyCurve,
    RatePoint,
    RateRecord,
    compute_rate,
    evaluate_map,
    evaluate_mota,
    write_detections_jsonl,
)
from .packing import (
    PackedFrameSet,
    deserialize_metadata,
    pack,
    serialize_metadata,
    unpack,
)
from .report import emit_report
from .synthetic import DEFAULT_FRAME_RATE, SyntheticSceneSpec, generate_synthetic_dataset
from .tensorfile import read_tensor_file, write_tensor_file

CONFIG_VERSION = 1
DEFAULT_QPS = (4, 16, 28, 40)
FAILURE_TOLERANCE = 0.10
PIPELINES = ("local", "remote", "split")
EVALUATORS = ("map", "mota")
COLOR_MATRIX = "bt709_limited"


def tool_version() -> str:
    try:
        return version("vcbench")
    except PackageNotFoundError:
        return "0.0.0"


# ---------------------------------------------------------------------------
# configuration


class _Section:
    """Strict mapping reader: missing keys and unknown keys both name names."""

    _REQUIRED = object()

    def __init__(self, mapping: dict, context: str):
        if not isinstance(mapping, dict):
            raise ValidationError(f"{context}: expected a mapping")
        self._map = dict(mapping)
        self._context = context

    def take(self, key: str, default=_REQUIRED):
        if key in self._map:
            return self._map.pop(key)
        if default is _Section._REQUIRED:
            raise ValidationError(f"{self._context}: missing key {key!r}")
        return default

    def finish(self) -> None:
        if self._map:
            names = ", ".join(repr(k) for k in sorted(self._map))
            raise ValidationError(f"{self._context}: unknown keys {names}")


def _as_int(value, context: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ValidationError(f"{context}: expected an integer, got {value!r}")
    return value


def _as_float(value, context: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ValidationError(f"{context}: expected a number, got {value!r}")
    return float(value)


@dataclass
class DatasetConfig:
    kind: str
    synthetic: SyntheticSceneSpec | None = None
    frame_rate: float | None = None
    root: Path | None = None
    annotations: Path | None = None
    video: Path | None = None
    width: int = 0
    height: int = 0
    bit_depth: int = 8
    chroma: str = MONO_400


@dataclass
class CodecConfig:
    kind: str  # reference | null | external
    qps: list[int]
    temporal_mode: str = ALL_INTRA
    intra_period: int = 1
    external: ExternalCodecSpec | None = None


@dataclass
class BackendConfig:
    builtin: str | None = None
    command: list[str] | None = None
    split_tag: str | None = None


@dataclass
class RunConfig:
    pipeline: str
    dataset: DatasetConfig
    backend: BackendConfig
    evaluator: str
    output_dir: Path
    codec: CodecConfig | None = None
    packing_bit_depth: int = 10
    workers: int = 1
    cache: bool = False
    label: str = ""
    snapshot: dict = field(default_factory=dict)


def _parse_dataset(block: dict) -> DatasetConfig:
    section = _Section(block, "dataset")
    kind = section.take("kind")
    if kind == "synthetic":
        motion = section.take("motion", None)
        if motion is not None:
            motion = tuple(
                (float(pair[0]), float(pair[1])) for pair in motion
            )
        spec = SyntheticSceneSpec(
            width=_as_int(section.take("width", 64), "dataset.width"),
            height=_as_int(section.take("height", 64), "dataset.height"),
            num_items=_as_int(section.take("num_items", 20), "dataset.num_items"),
            rects_per_item=_as_int(
                section.take("rects_per_item", 3), "dataset.rects_per_item"
            ),
            contrast=_as_float(section.take("contrast", 0.9), "dataset.contrast"),
            noise_amplitude=_as_float(
                section.take("noise_amplitude", 0.02), "dataset.noise_amplitude"
            ),
            seed=_as_int(section.take("seed", 0), "dataset.seed"),
            motion=motion,
            align=_as_int(section.take("align", 4), "dataset.align"),
        )
        frame_rate = section.take("frame_rate", None)
        if frame_rate is not None:
            frame_rate = _as_float(frame_rate, "dataset.frame_rate")
        section.finish()
        return DatasetConfig("synthetic", synthetic=spec, frame_rate=frame_rate)
    if kind == IMAGE_SET:
        config = DatasetConfig(
            IMAGE_SET,
            root=Path(section.take("root")),
            annotations=Path(section.take("annotations")),
        )
        section.finish()
        return config
    if kind == VIDEO_SEQUENCE:
        config = DatasetConfig(
            VIDEO_SEQUENCE,
            video=Path(section.take("video")),
            annotations=Path(section.take("tracks")),
            width=_as_int(section.take("width"), "dataset.width"),
            height=_as_int(section.take("height"), "dataset.height"),
            bit_depth=_as_int(section.take("bit_depth", 8), "dataset.bit_depth"),
            chroma=str(section.take("chroma", MONO_400)),
            frame_rate=_as_float(section.take("frame_rate"), "dataset.frame_rate"),
        )
        section.finish()
        return config
    raise ValidationError(f"dataset.kind: unknown kind {kind!r}")


def _parse_codec(block: dict) -> CodecConfig:
    section = _Section(block, "codec")
    kind = section.take("kind")
    if kind not in ("reference", "null", "external"):
        raise ValidationError(f"codec.kind: unknown kind {kind!r}")
    qps = section.take("qps", list(DEFAULT_QPS))
    if not isinstance(qps, list) or not qps:
        raise ValidationError("codec.qps: expected a nonempty list")
    qps = [_as_int(q, "codec.qps") for q in qps]
    if len(set(qps)) != len(qps):
        raise ValidationError("codec.qps: duplicate qp values")
    temporal_mode = section.take("temporal_mode", ALL_INTRA)
    if temporal_mode not in (ALL_INTRA, LOW_DELAY):
        raise ValidationError(f"codec.temporal_mode: unknown mode {temporal_mode!r}")
    intra_period = _as_int(section.take("intra_period", 1), "codec.intra_period")
    external = None
    if kind == "external":
        external = ExternalCodecSpec(
            encode_cmd=str(section.take("encode_cmd")),
            decode_cmd=str(section.take("decode_cmd")),
        )
    section.finish()
    return CodecConfig(kind, qps, temporal_mode, intra_period, external)


def _parse_backend(block: dict) -> BackendConfig:
    section = _Section(block, "backend")
    builtin = section.take("builtin", None)
    command = section.take("command", None)
    split_tag = section.take("split_tag", None)
    section.finish()
    if (builtin is None) == (command is None):
        raise ValidationError("backend: exactly one of 'builtin' or 'command' required")
    if builtin is not None and builtin not in BUILTIN_BACKENDS:
        raise ValidationError(f"backend.builtin: unknown backend {builtin!r}")
    if isinstance(command, str):
        import shlex

        command = shlex.split(command)
    return BackendConfig(builtin, command, split_tag)


def parse_run_config(path: str | Path) -> RunConfig:
    """Parse and validate a run configuration file."""
    try:
        blob = yaml.safe_load(Path(path).read_text())
    except yaml.YAMLError as exc:
        raise ValidationError(f"{path}: malformed YAML ({exc})") from exc
    if not isinstance(blob, dict):
        raise ValidationError(f"{path}: config must be a mapping")
    snapshot = json.loads(json.dumps(blob, default=str))
    section = _Section(blob, "config")
    config_version = section.take("config_version")
    if config_version != CONFIG_VERSION:
        raise ValidationError(
            f"config_version: expected {CONFIG_VERSION}, got {config_version!r}"
        )
    pipeline = section.take("pipeline")
    if pipeline not in PIPELINES:
        raise ValidationError(f"pipeline: unknown pipeline {pipeline!r}")
    dataset = _parse_dataset(section.take("dataset"))
    backend = _parse_backend(section.take("backend"))
    evaluator = section.take("evaluator")
    if evaluator not in EVALUATORS:
        raise ValidationError(f"evaluator: unknown evaluator {evaluator!r}")
    codec_block = section.take("codec", None)
    codec = _parse_codec(codec_block) if codec_block is not None else None
    packing_block = section.take("packing", None)
    packing_bit_depth = 10
    if packing_block is not None:
        packing = _Section(packing_block, "packing")
        packing_bit_depth = _as_int(packing.take("bit_depth", 10), "packing.bit_depth")
        packing.finish()
        if packing_bit_depth not in (8, 10):
            raise ValidationError("packing.bit_depth: must be 8 or 10")
    output_dir = Path(section.take("output_dir"))
    workers = _as_int(section.take("workers", 1), "workers")
    if workers < 1:
        raise ValidationError("workers: must be at least 1")
    cache = section.take("cache", False)
    if not isinstance(cache, bool):
        raise ValidationError("cache: expected a boolean")
    label = str(section.take("label", ""))
    section.finish()

    if pipeline in ("remote", "split") and codec is None:
        raise ValidationError(f"config: missing key 'codec' for pipeline {pipeline!r}")
    if pipeline == "split" and backend.split_tag is None:
        raise ValidationError("backend: missing key 'split_tag' for the split pipeline")
    if not label:
        label = pipeline if codec is None else f"{pipeline}-{codec.kind}"
    return RunConfig(
        pipeline=pipeline,
        dataset=dataset,
        backend=backend,
        evaluator=evaluator,
        output_dir=output_dir,
        codec=codec,
        packing_bit_depth=packing_bit_depth,
        workers=workers,
        cache=cache,
        label=label,
        snapshot=snapshot,
    )


# ---------------------------------------------------------------------------
# datasets


@dataclass
class LoadedDataset:
    """A dataset materialized in memory: ground truth plus per-item inputs.

    frames holds codec-facing planar inputs (empty for PPM image sets, which
    cannot feed a planar codec and therefore only run the local pipeline).
    images holds decoded PPM content for image sets.
    """

    handle: DatasetHandle
    digest: str
    frames: dict[str, PlanarFrame] = field(default_factory=dict)
    images: dict[str, RgbImage] = field(default_factory=dict)

    @property
    def kind(self) -> str:
        return self.handle.kind

    @property
    def items(self) -> list[str]:
        return self.handle.items

    @property
    def frame_rate(self) -> float | None:
        return self.handle.frame_rate

    def frame(self, item_id: str) -> PlanarFrame:
        if item_id not in self.frames:
            raise ValidationError(
                "this dataset stores PPM images; remote/split pipelines need "
                "planar frame inputs (synthetic or video_sequence)"
            )
        return self.frames[item_id]

    def model_input(self, item_id: str) -> RgbImage | PlanarFrame:
        if item_id in self.images:
            return self.images[item_id]
        return frame_to_model_input(self.frames[item_id])

    def pixel_count(self, item_id: str) -> int:
        source = self.images.get(item_id) or self.frames[item_id]
        return source.width * source.height


@dataclass
class _SubsetView:
    """Dataset restricted to the items that survived a rate point."""

    kind: str
    items: list[str]
    frame_rate: float | None
    _parent: LoadedDataset

    def pixel_count(self, item_id: str) -> int:
        return self._parent.pixel_count(item_id)


def frame_to_model_input(frame: PlanarFrame) -> RgbImage | PlanarFrame:
    """Model-facing view of a planar frame: 4:2:0 converts to RGB, mono
    passes through."""
    if frame.chroma == YUV_420:
        return yuv_to_rgb(frame)
    return frame


def load_dataset(config: DatasetConfig) -> LoadedDataset:
    if config.kind == "synthetic":
        assert config.synthetic is not None
        dataset = generate_synthetic_dataset(config.synthetic)
        handle = dataset.handle
        if config.frame_rate is not None and handle.kind == VIDEO_SEQUENCE:
            handle.frame_rate = config.frame_rate
        return LoadedDataset(handle, dataset.digest(), frames=dataset.frames)
    if config.kind == IMAGE_SET:
        assert config.root is not None and config.annotations is not None
        items, ground_truth = parse_coco_annotations(config.annotations)
        handle = DatasetHandle(IMAGE_SET, items, ground_truth)
        images = {}
        h = hashlib.sha256()
        for item in items:
            path = config.root / item
            if not path.exists():
                raise ValidationError(f"dataset image missing: {path}")
            data = path.read_bytes()
            h.update(data)
            images[item] = read_ppm(path)
        return LoadedDataset(handle, h.hexdigest(), images=images)
    assert config.kind == VIDEO_SEQUENCE
    assert config.video is not None and config.annotations is not None
    frames = read_yuv(
        config.video, config.width, config.height, config.bit_depth, config.chroma
    )
    ground_truth = parse_track_csv(config.annotations)
    items = [frame_item_id(i) for i in range(len(frames))]
    handle = DatasetHandle(VIDEO_SEQUENCE, items, ground_truth, config.frame_rate)
    known = set(items)
    for g in ground_truth:
        if g.item_id not in known:
            raise ValidationError(
                f"track ground truth references frame {g.frame_index} beyond "
                f"the {len(frames)}-frame sequence"
            )
    h = hashlib.sha256()
    frame_map = {}
    for item, frame in zip(items, frames):
        for plane in frame.planes:
            h.update(plane.tobytes())
        frame_map[item] = frame
    return LoadedDataset(handle, h.hexdigest(), frames=frame_map)


# ---------------------------------------------------------------------------
# backend runners


class _InProcessRunner:
    def __init__(self, backend):
        self._backend = backend
        self.capabilities = backend.capabilities()

    def infer_full(self, image: RgbImage | PlanarFrame, item_id: str) -> list[Detection]:
        return self._backend.infer_full(image, item_id)

    def part1(self, image: RgbImage | PlanarFrame, split_tag: str):
        supported = {s.tag for s in self.capabilities.split_tags}
        if split_tag not in supported:
            raise BackendError("unknown_split", f"split tag {split_tag!r}")
        return self._backend.part1(image)

    def part2(self, tensor_set, width: int, height: int, item_id: str) -> list[Detection]:
        return self._backend.part2(tensor_set, width, height, item_id)

    def close(self) -> None:
        pass


class _SubprocessRunner:
    """One protocol session plus a private scratch directory.

    Images cross the boundary as 8-bit PPM files; planar inputs are rendered
    to RGB first, so deeper-than-8-bit sources lose precision on this path.
    """

    def __init__(self, command: list[str]):
        self._dir = tempfile.TemporaryDirectory(prefix="vcbench-worker-")
        self._session = BackendSession(command)
        self.capabilities = self._session.hello()

    def _image_path(self, image: RgbImage | PlanarFrame) -> str:
        if isinstance(image, PlanarFrame):
            image = mono_to_rgb(image) if image.chroma == MONO_400 else yuv_to_rgb(image)
        path = Path(self._dir.name) / "input.ppm"
        write_ppm(path, image)
        return str(path)

    def infer_full(self, image: RgbImage | PlanarFrame, item_id: str) -> list[Detection]:
        return self._session.infer_full(self._image_path(image), item_id)

    def part1(self, image: RgbImage | PlanarFrame, split_tag: str):
        tensor_path = str(Path(self._dir.name) / "part1.ften")
        self._session.part1(self._image_path(image), split_tag, tensor_path)
        return read_tensor_file(tensor_path, split_tag)

    def part2(self, tensor_set, width: int, height: int, item_id: str) -> list[Detection]:
        tensor_path = str(Path(self._dir.name) / "part2.ften")
        write_tensor_file(tensor_path, tensor_set)
        return self._session.part2(
            tensor_path, tensor_set.split_tag, width, height, item_id
        )

    def close(self) -> None:
        self._session.shutdown()
        self._dir.cleanup()


class _RunnerPool:
    def __init__(self, config: BackendConfig, count: int):
        self._runners = []
        if config.builtin is not None:
            backend = BUILTIN_BACKENDS[config.builtin]()
            # built-ins are pure; one instance safely serves every worker
            self._runners = [_InProcessRunner(backend) for _ in range(count)]
        else:
            assert config.command is not None
            self._runners = [_SubprocessRunner(config.command) for _ in range(count)]
        self.capabilities = self._runners[0].capabilities
        self._queue: queue.Queue = queue.Queue()
        for runner in self._runners:
            self._queue.put(runner)

    @contextmanager
    def borrow(self):
        runner = self._queue.get()
        try:
            yield runner
        finally:
            self._queue.put(runner)

    def close(self) -> None:
        for runner in self._runners:
            runner.close()


def _validate_split_tag(pool: _RunnerPool, split_tag: str) -> int:
    """The expected tensor count for a split tag, cross-checked against the
    registry when the (model, tag) pair is a known split point."""
    declared = None
    model = None
    for spec in pool.capabilities.split_tags:
        if spec.tag == split_tag:
            declared = spec.tensor_count
            model = spec.model_name
            break
    if declared is None:
        raise ValidationError(f"backend does not support split tag {split_tag!r}")
    for spec in SPLIT_REGISTRY:
        if spec.model_name == model and spec.tag == split_tag:
            if spec.tensor_count != declared:
                raise ValidationError(
                    f"backend declares {declared} tensors for split "
                    f"({model!r}, {split_tag!r}); the registry says "
                    f"{spec.tensor_count}"
                )
            return spec.tensor_count
    return declared


# ---------------------------------------------------------------------------
# codec facade


class _Codec:
    def __init__(self, config: CodecConfig):
        self._config = config
        self._external = ExternalCodec(config.external) if config.external else None

    def params(self, qp: int) -> CodecParams:
        return CodecParams(qp, self._config.temporal_mode, self._config.intra_period)

    def encode(self, frames: list[PlanarFrame], qp: int, fps: float) -> bytes:
        if self._config.kind == "reference":
            return codecs.encode_reference(frames, self.params(qp))
        if self._config.kind == "null":
            return codecs.encode_null(frames)
        assert self._external is not None
        return self._external.encode(frames, qp, fps)

    def decode(self, data: bytes, frames: list[PlanarFrame], fps: float) -> list[PlanarFrame]:
        if self._config.kind in ("reference", "null"):
            return codecs.decode(data)
        assert self._external is not None
        first = frames[0]
        return self._external.decode(
            data,
            first.width,
            first.height,
            first.bit_depth,
            first.chroma,
            len(frames),
            fps=fps,
        )

    def frame_bits(self, data: bytes, frame_count: int) -> list[int]:
        """Per-frame bit attribution summing exactly to the stream size."""
        if self._config.kind in ("reference", "null"):
            sizes = codecs.payload_sizes(data)
            bits = [8 * (4 + size) for size in sizes]
            bits[0] += 8 * (len(data) - sum(sizes) - 4 * len(sizes))
        else:
            share = (8 * len(data)) // frame_count
            bits = [share] * frame_count
            bits[0] += 8 * len(data) - share * frame_count
        return bits


# ---------------------------------------------------------------------------
# run records and caching


@dataclass
class ItemResult:
    bits: int
    detections: list[Detection]
    digest: str
    timings: dict[str, float] = field(default_factory=dict)


@dataclass
class PointOutcome:
    qp: int
    rate: float | None
    accuracy: float | None
    total_bits: int
    failed_items: dict[str, str]
    items: dict[str, ItemResult]
    invalid_reason: str | None = None


@dataclass
class RunOutcome:
    label: str
    pipeline: str
    run_dir: Path
    curve: RateAccuracyCurve | None
    baseline_accuracy: float | None
    record: dict


class _Cache:
    """Per-(qp, item) store of bitstreams and detection results.

    The key pins config (minus plumbing fields), dataset content, and tool
    version; a key change wipes the store, so a hit can never change numbers.
    """

    def __init__(self, run_dir: Path, key: str, enabled: bool):
        self.enabled = enabled
        self.bitstream_dir = run_dir / "bitstreams"
        self._entry_dir = run_dir / "cache"
        self._key_path = self._entry_dir / "key.json"
        if not enabled:
            return
        stale = True
        if self._key_path.exists():
            try:
                stale = json.loads(self._key_path.read_text()).get("key") != key
            except ValueError:
                stale = True
        if stale:
            shutil.rmtree(self._entry_dir, ignore_errors=True)
            shutil.rmtree(self.bitstream_dir, ignore_errors=True)
        self._entry_dir.mkdir(parents=True, exist_ok=True)
        self._key_path.write_text(json.dumps({"key": key}) + "\n")

    def _entry(self, qp: int, name: str) -> Path:
        return self._entry_dir / f"qp_{qp:02d}" / f"{name}.json"

    def stream_path(self, qp: int, name: str) -> Path:
        return self.bitstream_dir / f"qp_{qp:02d}" / f"{name}.bin"

    def load(self, qp: int, name: str) -> ItemResult | None:
        if not self.enabled:
            return None
        path = self._entry(qp, name)
        if not path.exists():
            return None
        try:
            blob = json.loads(path.read_text())
            detections = [
                Detection(d["item_id"], d["category"], tuple(d["box"]), d["score"])
                for d in blob["detections"]
            ]
            return ItemResult(int(blob["bits"]), detections, str(blob["digest"]))
        except (ValueError, KeyError, TypeError):
            return None

    def store(self, qp: int, name: str, result: ItemResult, stream: bytes | None) -> None:
        if not self.enabled:
            return
        entry = self._entry(qp, name)
        entry.parent.mkdir(parents=True, exist_ok=True)
        blob = {
            "bits": result.bits,
            "digest": result.digest,
            "detections": [
                {
                    "item_id": d.item_id,
                    "category": d.category,
                    "box": list(d.box),
                    "score": d.score,
                }
                for d in result.detections
            ],
        }
        entry.write_text(json.dumps(blob, sort_keys=True) + "\n")
        if stream is not None:
            path = self.stream_path(qp, name)
            path.parent.mkdir(parents=True, exist_ok=True)
            path.write_bytes(stream)


def _frame_digest(frame: PlanarFrame) -> str:
    h = hashlib.sha256()
    for plane in frame.planes:
        h.update(plane.tobytes())
    return h.hexdigest()[:16]


def _cache_key(config: RunConfig, dataset_digest: str) -> str:
    snapshot = dict(config.snapshot)
    for volatile in ("output_dir", "workers", "cache"):
        snapshot.pop(volatile, None)
    payload = json.dumps(
        {"config": snapshot, "dataset": dataset_digest, "version": tool_version()},
        sort_keys=True,
    )
    return hashlib.sha256(payload.encode()).hexdigest()


# ---------------------------------------------------------------------------
# evaluation helpers


def _evaluate(
    config: RunConfig,
    dataset: LoadedDataset,
    detections_per_item: dict[str, list[Detection]],
) -> tuple[float, list]:
    """(accuracy, serializable boxes) over the items present in the mapping."""
    survivors = set(detections_per_item)
    ground_truth = [g for g in dataset.handle.ground_truth if g.item_id in survivors]
    if config.evaluator == "map":
        detections = [
            d for item in dataset.items if item in survivors
            for d in detections_per_item[item]
        ]
        return evaluate_map(detections, ground_truth).map, detections
    per_frame = [detections_per_item.get(item, []) for item in dataset.items]
    tracked = synthetic_tracker(per_frame)
    result = evaluate_mota(tracked, ground_truth)
    if result.mota is None:
        raise RunError("MOTA is undefined: the dataset has no ground truth boxes")
    return result.mota, tracked


def _check_evaluator(config: RunConfig, dataset: LoadedDataset) -> None:
    if config.evaluator == "mota":
        if dataset.kind != VIDEO_SEQUENCE:
            raise ValidationError(
                "evaluator 'mota' needs a video_sequence dataset with track ids; "
                f"got kind {dataset.kind!r}"
            )
        for g in dataset.handle.ground_truth:
            if g.track_id is None:
                raise ValidationError("evaluator 'mota' needs track ids on ground truth")


# per-item failures a point tolerates; anything else aborts the run
_ITEM_FAILURES = (BackendError, CorruptionError, AdapterError)


def _run_items(pool: _RunnerPool, workers: int, jobs: list) -> list:
    """Run (name, callable) jobs across the pool, results in input order."""
    results: list = [None] * len(jobs)

    def work(index: int) -> None:
        name, fn = jobs[index]
        with pool.borrow() as runner:
            try:
                results[index] = (name, fn(runner), None)
            except _ITEM_FAILURES as exc:
                results[index] = (name, None, f"{type(exc).__name__}: {exc}")

    if workers == 1:
        for index in range(len(jobs)):
            work(index)
    else:
        with ThreadPoolExecutor(max_workers=workers) as executor:
            list(executor.map(work, range(len(jobs))))
    return results


# ---------------------------------------------------------------------------
# pipelines


def _run_local(config: RunConfig, dataset: LoadedDataset, pool: _RunnerPool) -> tuple[float, list, dict]:
    def make_job(item: str):
        def job(runner):
            start = time.perf_counter()
            detections = runner.infer_full(dataset.model_input(item), item)
            return ItemResult(0, detections, "", {"infer": time.perf_counter() - start})

        return (item, job)

    results = _run_items(pool, config.workers, [make_job(i) for i in dataset.items])
    detections_per_item = {}
    item_records = {}
    for name, result, error in results:
        if error is not None:
            raise RunError(f"local inference failed on {name}: {error}")
        detections_per_item[name] = result.detections
        item_records[name] = {"timings": result.timings}
    accuracy, boxes = _evaluate(config, dataset, detections_per_item)
    return accuracy, boxes, item_records


def _point_from_results(
    config: RunConfig,
    dataset: LoadedDataset,
    qp: int,
    results: list,
) -> tuple[PointOutcome, list]:
    items = dataset.items
    failed = {name: err for name, _, err in results if err is not None}
    allowed = int(FAILURE_TOLERANCE * len(items))
    if len(failed) > allowed:
        outcome = PointOutcome(
            qp, None, None, 0, failed, {},
            invalid_reason=(
                f"{len(failed)} of {len(items)} items failed "
                f"(tolerance {allowed})"
            ),
        )
        return outcome, []
    survivors = {name: result for name, result, err in results if err is None}
    records = [RateRecord(name, result.bits) for name, result in survivors.items()]
    view = _SubsetView(
        dataset.kind,
        [i for i in items if i in survivors],
        dataset.frame_rate,
        dataset,
    )
    rate = compute_rate(records, view)
    detections_per_item = {name: r.detections for name, r in survivors.items()}
    accuracy, boxes = _evaluate(config, dataset, detections_per_item)
    total_bits = sum(r.bits for r in survivors.values())
    return PointOutcome(qp, rate, accuracy, total_bits, failed, survivors), boxes


def _remote_point_image(
    config: RunConfig,
    dataset: LoadedDataset,
    pool: _RunnerPool,
    codec: _Codec,
    cache: _Cache,
    qp: int,
) -> tuple[PointOutcome, list]:
    fps = dataset.frame_rate or DEFAULT_FRAME_RATE

    def make_job(item: str):
        cached = cache.load(qp, item)

        def job(runner):
            if cached is not None:
                return cached
            timings = {}
            frame = dataset.frame(item)
            start = time.perf_counter()
            stream = codec.encode([frame], qp, fps)
            timings["encode"] = time.perf_counter() - start
            start = time.perf_counter()
            decoded = codec.decode(stream, [frame], fps)[0]
            timings["decode"] = time.perf_counter() - start
            start = time.perf_counter()
            detections = runner.infer_full(frame_to_model_input(decoded), item)
            timings["infer"] = time.perf_counter() - start
            result = ItemResult(8 * len(stream), detections, _frame_digest(decoded), timings)
            cache.store(qp, item, result, stream)
            return result

        return (item, job)

    results = _run_items(pool, config.workers, [make_job(i) for i in dataset.items])
    return _point_from_results(config, dataset, qp, results)


def _remote_point_video(
    config: RunConfig,
    dataset: LoadedDataset,
    pool: _RunnerPool,
    codec: _Codec,
    cache: _Cache,
    qp: int,
) -> tuple[PointOutcome, list]:
    items = dataset.items
    fps = dataset.frame_rate or DEFAULT_FRAME_RATE
    cached = [cache.load(qp, item) for item in items]
    if all(c is not None for c in cached):
        results = [(item, c, None) for item, c in zip(items, cached)]
        return _point_from_results(config, dataset, qp, results)

    frames = [dataset.frame(item) for item in items]
    stream = codec.encode(frames, qp, fps)
    decoded = codec.decode(stream, frames, fps)
    bits = codec.frame_bits(stream, len(frames))

    def make_job(index: int):
        item = items[index]

        def job(runner):
            start = time.perf_counter()
            detections = runner.infer_full(frame_to_model_input(decoded[index]), item)
            return ItemResult(
                bits[index],
                detections,
                _frame_digest(decoded[index]),
                {"infer": time.perf_counter() - start},
            )

        return (item, job)

    results = _run_items(pool, config.workers, [make_job(i) for i in range(len(items))])
    for name, result, error in results:
        if error is None:
            cache.store(qp, name, result, None)
    if cache.enabled:
        path = cache.stream_path(qp, "sequence")
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_bytes(stream)
    return _point_from_results(config, dataset, qp, results)


def _split_prepare(
    config: RunConfig,
    dataset: LoadedDataset,
    expected_tensors: int,
    item: str,
    runner,
) -> PackedFrameSet:
    split_tag = config.backend.split_tag
    assert split_tag is not None
    tensor_set = runner.part1(dataset.model_input(item), split_tag)
    if len(tensor_set.tensors) != expected_tensors:
        raise RunError(
            f"split tag {split_tag!r}: part1 returned {len(tensor_set.tensors)} "
            f"tensors, contract says {expected_tensors}"
        )
    return pack(tensor_set, config.packing_bit_depth)


def _split_point_image(
    config: RunConfig,
    dataset: LoadedDataset,
    pool: _RunnerPool,
    codec: _Codec,
    cache: _Cache,
    qp: int,
    expected_tensors: int,
) -> tuple[PointOutcome, list]:
    fps = dataset.frame_rate or DEFAULT_FRAME_RATE

    def make_job(item: str):
        cached = cache.load(qp, item)

        def job(runner):
            if cached is not None:
                return cached
            timings = {}
            source = dataset.model_input(item)
            start = time.perf_counter()
            packed = _split_prepare(config, dataset, expected_tensors, item, runner)
            timings["part1_pack"] = time.perf_counter() - start
            sidecar = serialize_metadata(packed.metadata)
            start = time.perf_counter()
            stream = codec.encode([packed.frame], qp, fps)
            timings["encode"] = time.perf_counter() - start
            start = time.perf_counter()
            decoded = codec.decode(stream, [packed.frame], fps)[0]
            timings["decode"] = time.perf_counter() - start
            received = PackedFrameSet(
                decoded, deserialize_metadata(sidecar), packed.split_tag
            )
            start = time.perf_counter()
            tensors = unpack(received)
            detections = runner.part2(tensors, source.width, source.height, item)
            timings["unpack_part2"] = time.perf_counter() - start
            result = ItemResult(
                8 * (len(stream) + len(sidecar)),
                detections,
                _frame_digest(decoded),
                timings,
            )
            cache.store(qp, item, result, stream)
            return result

        return (item, job)

    results = _run_items(pool, config.workers, [make_job(i) for i in dataset.items])
    return _point_from_results(config, dataset, qp, results)


def _split_point_video(
    config: RunConfig,
    dataset: LoadedDataset,
    pool: _RunnerPool,
    codec: _Codec,
    cache: _Cache,
    qp: int,
    expected_tensors: int,
) -> tuple[PointOutcome, list]:
    items = dataset.items
    fps = dataset.frame_rate or DEFAULT_FRAME_RATE
    cached = [cache.load(qp, item) for item in items]
    if all(c is not None for c in cached):
        results = [(item, c, None) for item, c in zip(items, cached)]
        return _point_from_results(config, dataset, qp, results)

    def make_prepare(item: str):
        def job(runner):
            return _split_prepare(config, dataset, expected_tensors, item, runner)

        return (item, job)

    prepared = _run_items(pool, config.workers, [make_prepare(i) for i in items])
    for name, _, error in prepared:
        if error is not None:
            # the sequence cannot be coded with holes in it
            raise RunError(f"split part1 failed on {name}: {error}")
    packed = [result for _, result, _ in prepared]
    sidecars = [serialize_metadata(p.metadata) for p in packed]
    stream = codec.encode([p.frame for p in packed], qp, fps)
    decoded = codec.decode(stream, [p.frame for p in packed], fps)
    bits = codec.frame_bits(stream, len(items))

    def make_job(index: int):
        item = items[index]

        def job(runner):
            start = time.perf_counter()
            received = PackedFrameSet(
                decoded[index],
                deserialize_metadata(sidecars[index]),
                packed[index].split_tag,
            )
            tensors = unpack(received)
            source = dataset.model_input(item)
            detections = runner.part2(tensors, source.width, source.height, item)
            return ItemResult(
                bits[index] + 8 * len(sidecars[index]),
                detections,
                _frame_digest(decoded[index]),
                {"unpack_part2": time.perf_counter() - start},
            )

        return (item, job)

    results = _run_items(pool, config.workers, [make_job(i) for i in range(len(items))])
    for name, result, error in results:
        if error is None:
            cache.store(qp, name, result, None)
    if cache.enabled:
        path = cache.stream_path(qp, "sequence")
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_bytes(stream)
    return _point_from_results(config, dataset, qp, results)


# ---------------------------------------------------------------------------
# run entry point


def run(config: RunConfig) -> RunOutcome:
    """Execute one configured run and write its run directory."""
    dataset = load_dataset(config.dataset)
    _check_evaluator(config, dataset)
    if config.pipeline != "local" and not dataset.frames:
        raise ValidationError(
            f"pipeline {config.pipeline!r} needs planar frame inputs; PPM image "
            "sets run the local pipeline only"
        )
    run_dir = config.output_dir
    run_dir.mkdir(parents=True, exist_ok=True)
    (run_dir / "config.yaml").write_text(
        yaml.safe_dump(config.snapshot, sort_keys=True)
    )

    pool = _RunnerPool(config.backend, config.workers)
    try:
        record: dict = {
            "tool_version": tool_version(),
            "pipeline": config.pipeline,
            "label": config.label,
            "evaluator": config.evaluator,
            "dataset_digest": dataset.digest,
            "color_matrix": COLOR_MATRIX,
            "config": config.snapshot,
        }

        if config.pipeline == "local":
            accuracy, boxes, item_records = _run_local(config, dataset, pool)
            write_detections_jsonl(run_dir / "detections_local.jsonl", boxes)
            record["baseline_accuracy"] = accuracy
            record["items"] = item_records
            (run_dir / "run_record.json").write_text(
                json.dumps(record, indent=1, sort_keys=True) + "\n"
            )
            return RunOutcome(config.label, "local", run_dir, None, accuracy, record)

        assert config.codec is not None
        codec = _Codec(config.codec)
        cache = _Cache(run_dir, _cache_key(config, dataset.digest), config.cache)
        expected_tensors = 0
        if config.pipeline == "split":
            assert config.backend.split_tag is not None
            expected_tensors = _validate_split_tag(pool, config.backend.split_tag)
            record["packing"] = {
                "bit_depth": config.packing_bit_depth,
                "quantization": "global_min_max",
                "layout": "channel_grids_stacked_vertically",
            }

        is_video = dataset.kind == VIDEO_SEQUENCE
        points: list[RatePoint] = []
        point_records = []
        for qp in sorted(config.codec.qps, reverse=True):
            if config.pipeline == "remote":
                point_fn = _remote_point_video if is_video else _remote_point_image
                outcome, boxes = point_fn(config, dataset, pool, codec, cache, qp)
            else:
                point_fn = _split_point_video if is_video else _split_point_image
                outcome, boxes = point_fn(
                    config, dataset, pool, codec, cache, qp, expected_tensors
                )
            entry = {
                "qp": outcome.qp,
                "rate": outcome.rate,
                "accuracy": outcome.accuracy,
                "total_bits": outcome.total_bits,
                "failed_items": outcome.failed_items,
            }
            if outcome.invalid_reason is not None:
                entry["invalid"] = outcome.invalid_reason
            else:
                assert outcome.rate is not None and outcome.accuracy is not None
                points.append(
                    RatePoint(outcome.qp, outcome.rate, outcome.accuracy, config.label)
                )
                write_detections_jsonl(
                    run_dir / f"detections_qp{qp:02d}.jsonl", boxes
                )
                entry["items"] = {
                    name: {"bits": r.bits, "digest": r.digest, "timings": r.timings}
                    for name, r in outcome.items.items()
                }
            point_records.append(entry)

        record["points"] = point_records
        (run_dir / "run_record.json").write_text(
            json.dumps(record, indent=1, sort_keys=True) + "\n"
        )
        if not points:
            raise RunError("every rate point failed; see run_record.json")
        curve = RateAccuracyCurve(config.label, points)
        emit_report([curve], run_dir, title=config.label)
        return RunOutcome(config.label, config.pipeline, run_dir, curve, None, record)
    finally:
        pool.close()


def run_config_file(path: str | Path) -> RunOutcome:
    return run(parse_run_config(path))
