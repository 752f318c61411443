"""Inference backends and the child-process protocol that hosts them.

A backend is either called in process (built-ins) or spoken to over a
line-delimited JSON protocol on stdin/stdout of a child process. One request
line yields exactly one response line, in order. Message types: hello,
infer_full, part1, part2, shutdown; any failure answers with
{"type": "error", "code": ..., "message": ...} and the session stays usable.

Tensors cross the process boundary as tensor files (see tensorfile), images
as PPM paths. Split points are named by (model_name, tag) and carry the
number of tensors a conforming part1 must emit for that tag.
"""

from __future__ import annotations

import json
import subprocess
import sys
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .errors import ProtocolError, RunError, SessionError, ValidationError
from .frames import MONO_400, PlanarFrame, RgbImage, read_ppm
from .metrics import iou as box_iou
from .packing import FeatureTensor, FeatureTensorSet
from .tensorfile import read_tensor_file, write_tensor_file

PROTOCOL_VERSION = 1
TASK_DETECTION = "detection"
TASK_TRACKING = "tracking"

SYNTHETIC_TAG = "s1"
SYNTHETIC_THRESHOLD = 0.45
SYNTHETIC_STRIDE = 4
MIN_COMPONENT = 2
TRACKER_IOU = 0.3


@dataclass(frozen=True)
class SplitPointSpec:
    model_name: str
    tag: str
    tensor_count: int


# Known split points; part1 responses must match the tensor count listed here.
SPLIT_REGISTRY: tuple[SplitPointSpec, ...] = (
    SplitPointSpec("faster_rcnn_x101", "r2", 1),
    SplitPointSpec("mask_rcnn_x101", "c2", 1),
    SplitPointSpec("faster_rcnn_r50", "fpn", 4),
    SplitPointSpec("jde_1088x608", "dn53", 3),
    SplitPointSpec("jde_1088x608", "alt1", 3),
    SplitPointSpec("yolox_darknet53", "l13", 1),
    SplitPointSpec("yolox_darknet53", "l37", 1),
    SplitPointSpec("rtmo", "backbone", 2),
    SplitPointSpec("rtmo", "neck", 2),
    SplitPointSpec("synthetic", SYNTHETIC_TAG, 4),
)


def registry_tensor_count(tag: str) -> int:
    for spec in SPLIT_REGISTRY:
        if spec.tag == tag:
            return spec.tensor_count
    raise ValidationError(f"unknown split tag {tag!r}")


@dataclass(frozen=True)
class Detection:
    item_id: str
    category: str
    box: tuple[float, float, float, float]
    score: float


@dataclass(frozen=True)
class TrackedBox:
    item_id: str
    frame_index: int
    track_id: int
    category: str
    box: tuple[float, float, float, float]
    score: float


@dataclass
class BackendCapabilities:
    tasks: list[str]
    split_tags: list[SplitPointSpec]
    protocol_version: int = PROTOCOL_VERSION

    def __post_init__(self):
        for task in self.tasks:
            if task not in (TASK_DETECTION, TASK_TRACKING):
                raise ValidationError(f"unknown task {task!r}")


class BackendError(RunError):
    """Error response received from a backend."""

    def __init__(self, code: str, message: str):
        self.code = code
        super().__init__(f"{code}: {message}")


def _luma01(image: RgbImage | PlanarFrame) -> np.ndarray:
    if isinstance(image, RgbImage):
        return image.pixels.astype(np.float64).mean(axis=2) / 255.0
    if image.chroma != MONO_400:
        raise ValidationError("backend expects RGB images or mono frames")
    return image.planes[0].astype(np.float64) / float(image.max_value)


def _pad_to_stride(luma: np.ndarray, stride: int) -> np.ndarray:
    h, w = luma.shape
    pad_h = (-h) % stride
    pad_w = (-w) % stride
    if pad_h or pad_w:
        luma = np.pad(luma, ((0, pad_h), (0, pad_w)), mode="edge")
    return luma


def _box_mean_3x3(a: np.ndarray) -> np.ndarray:
    padded = np.pad(a, 1, mode="edge")
    out = np.zeros_like(a)
    for di in range(3):
        for dj in range(3):
            out += padded[di : di + a.shape[0], dj : dj + a.shape[1]]
    return out / 9.0


class SyntheticBackend:
    """Analytic detector over stride-4 luma statistics.

    part1 emits four single-channel tensors at a quarter resolution: local
    mean, horizontal and vertical forward differences of the mean, and the
    mean's 3x3 high-pass. part2 thresholds the first tensor and reads
    connected components as boxes, so infer_full is exactly part2 after
    part1.
    """

    def capabilities(self) -> BackendCapabilities:
        return BackendCapabilities(
            tasks=[TASK_DETECTION, TASK_TRACKING],
            split_tags=[SplitPointSpec("synthetic", SYNTHETIC_TAG, 4)],
        )

    def part1(self, image: RgbImage | PlanarFrame) -> FeatureTensorSet:
        luma = _pad_to_stride(_luma01(image), SYNTHETIC_STRIDE)
        h4 = luma.shape[0] // SYNTHETIC_STRIDE
        w4 = luma.shape[1] // SYNTHETIC_STRIDE
        c0 = luma.reshape(h4, SYNTHETIC_STRIDE, w4, SYNTHETIC_STRIDE).mean(axis=(1, 3))
        c1 = np.zeros_like(c0)
        c1[:, :-1] = c0[:, 1:] - c0[:, :-1]
        c2 = np.zeros_like(c0)
        c2[:-1, :] = c0[1:, :] - c0[:-1, :]
        c3 = c0 - _box_mean_3x3(c0)
        tensors = [
            FeatureTensor(ch[np.newaxis].astype(np.float32)) for ch in (c0, c1, c2, c3)
        ]
        return FeatureTensorSet(SYNTHETIC_TAG, tensors)

    def part2(
        self,
        tensor_set: FeatureTensorSet,
        image_width: int,
        image_height: int,
        item_id: str = "",
    ) -> list[Detection]:
        if tensor_set.split_tag != SYNTHETIC_TAG:
            raise BackendError("unknown_split", f"split tag {tensor_set.split_tag!r}")
        expected = registry_tensor_count(SYNTHETIC_TAG)
        if len(tensor_set.tensors) != expected:
            raise BackendError(
                "tensor_count",
                f"expected {expected} tensors for {SYNTHETIC_TAG!r}, "
                f"got {len(tensor_set.tensors)}",
            )
        t0 = tensor_set.tensors[0].values[0].astype(np.float64)
        mask = t0 > SYNTHETIC_THRESHOLD
        labels, n = ndimage.label(mask, structure=[[0, 1, 0], [1, 1, 1], [0, 1, 0]])
        detections = []
        for index in range(1, n + 1):
            rows, cols = np.nonzero(labels == index)
            if len(rows) < MIN_COMPONENT:
                continue
            r0, r1 = int(rows.min()), int(rows.max())
            c0_, c1_ = int(cols.min()), int(cols.max())
            box = (
                float(min(c0_ * SYNTHETIC_STRIDE, image_width)),
                float(min(r0 * SYNTHETIC_STRIDE, image_height)),
                float(min((c1_ + 1) * SYNTHETIC_STRIDE, image_width)),
                float(min((r1 + 1) * SYNTHETIC_STRIDE, image_height)),
            )
            score = float(np.clip(t0[r0 : r1 + 1, c0_ : c1_ + 1].mean(), 0.0, 1.0))
            detections.append(Detection(item_id, "object", box, score))
        return detections

    def infer_full(
        self, image: RgbImage | PlanarFrame, item_id: str = ""
    ) -> list[Detection]:
        return self.part2(self.part1(image), image.width, image.height, item_id)


def synthetic_tracker(
    detections_per_frame: list[list[Detection]],
) -> list[TrackedBox]:
    """Greedy frame-to-frame association.

    Each detection joins the unmatched previous-frame track with the highest
    IoU at or above 0.3 (ties go to the lower track id); everything else
    starts a new track. A track that misses a frame is dead: reappearance
    gets a fresh id.
    """
    tracked: list[TrackedBox] = []
    prev: list[tuple[int, tuple[float, float, float, float]]] = []
    next_id = 0
    for frame_index, detections in enumerate(detections_per_frame):
        available = list(prev)
        current: list[tuple[int, tuple[float, float, float, float]]] = []
        for det in detections:
            best_pos = -1
            best_iou = 0.0
            for pos, (tid, box) in enumerate(available):
                iou = box_iou(det.box, box)
                if iou >= TRACKER_IOU and (
                    iou > best_iou
                    or (iou == best_iou and best_pos >= 0 and tid < available[best_pos][0])
                ):
                    best_pos = pos
                    best_iou = iou
            if best_pos >= 0:
                tid = available.pop(best_pos)[0]
            else:
                tid = next_id
                next_id += 1
            current.append((tid, det.box))
            tracked.append(
                TrackedBox(det.item_id, frame_index, tid, det.category, det.box, det.score)
            )
        prev = current
    return tracked


BUILTIN_BACKENDS = {"synthetic": SyntheticBackend}


def serve(backend, stdin=None, stdout=None) -> None:
    """Answer protocol requests until shutdown or EOF; never deadlocks on
    malformed input."""
    stdin = stdin or sys.stdin
    stdout = stdout or sys.stdout

    def reply(payload: dict) -> None:
        stdout.write(json.dumps(payload, separators=(",", ":")) + "\n")
        stdout.flush()

    for line in stdin:
        if not line.strip():
            continue
        try:
            msg = json.loads(line)
            if not isinstance(msg, dict) or "type" not in msg:
                raise ValueError("message must be an object with a type")
        except ValueError as exc:
            reply({"type": "error", "code": "protocol", "message": str(exc)})
            continue
        try:
            kind = msg["type"]
            if kind == "hello":
                caps = backend.capabilities()
                reply(
                    {
                        "type": "hello",
                        "protocol_version": caps.protocol_version,
                        "tasks": caps.tasks,
                        "split_tags": [
                            {
                                "model": s.model_name,
                                "tag": s.tag,
                                "tensor_count": s.tensor_count,
                            }
                            for s in caps.split_tags
                        ],
                    }
                )
            elif kind == "infer_full":
                image = read_ppm(msg["image_path"])
                dets = backend.infer_full(image, msg.get("item_id", ""))
                reply(_detections_message(dets))
            elif kind == "part1":
                tag = msg["split_tag"]
                supported = {s.tag for s in backend.capabilities().split_tags}
                if tag not in supported:
                    reply(
                        {
                            "type": "error",
                            "code": "unknown_split",
                            "message": f"split tag {tag!r} is not supported",
                        }
                    )
                    continue
                image = read_ppm(msg["image_path"])
                tensor_set = backend.part1(image)
                write_tensor_file(msg["tensor_path"], tensor_set)
                reply(
                    {
                        "type": "tensors",
                        "split_tag": tag,
                        "tensor_path": msg["tensor_path"],
                        "shapes": [list(t.shape) for t in tensor_set.tensors],
                    }
                )
            elif kind == "part2":
                tensor_set = read_tensor_file(msg["tensor_path"], msg["split_tag"])
                dets = backend.part2(
                    tensor_set,
                    int(msg["image_width"]),
                    int(msg["image_height"]),
                    msg.get("item_id", ""),
                )
                reply(_detections_message(dets))
            elif kind == "shutdown":
                reply({"type": "bye"})
                return
            else:
                reply(
                    {
                        "type": "error",
                        "code": "bad_request",
                        "message": f"unknown message type {kind!r}",
                    }
                )
        except BackendError as exc:
            reply({"type": "error", "code": exc.code, "message": str(exc)})
        except KeyError as exc:
            reply(
                {
                    "type": "error",
                    "code": "bad_request",
                    "message": f"missing field {exc.args[0]!r}",
                }
            )
        except Exception as exc:  # keep serving after any request failure
            reply({"type": "error", "code": "runtime", "message": str(exc)})


def _detections_message(detections: list[Detection]) -> dict:
    return {
        "type": "detections",
        "detections": [
            {
                "item_id": d.item_id,
                "category": d.category,
                "box": list(d.box),
                "score": d.score,
            }
            for d in detections
        ],
    }


class BackendSession:
    """Client side of the protocol: one child process, strict request order."""

    def __init__(self, command: list[str]):
        self.command = list(command)
        try:
            self._proc = subprocess.Popen(
                self.command,
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                stderr=subprocess.PIPE,
                text=True,
                bufsize=1,
            )
        except OSError as exc:
            raise SessionError(f"could not start backend {self.command!r}: {exc}") from exc
        self.capabilities: BackendCapabilities | None = None

    def __enter__(self) -> "BackendSession":
        return self

    def __exit__(self, *exc_info) -> None:
        self.close()

    def request(self, message: dict) -> dict:
        if self._proc.poll() is not None:
            raise SessionError(self._death_note("backend exited"))
        assert self._proc.stdin is not None and self._proc.stdout is not None
        try:
            self._proc.stdin.write(json.dumps(message, separators=(",", ":")) + "\n")
            self._proc.stdin.flush()
        except (BrokenPipeError, OSError) as exc:
            raise SessionError(self._death_note(f"write failed: {exc}")) from exc
        line = self._proc.stdout.readline()
        if not line:
            raise SessionError(self._death_note("backend closed its stdout"))
        try:
            response = json.loads(line)
        except ValueError as exc:
            raise ProtocolError(f"backend sent a non-JSON line: {line!r}") from exc
        if not isinstance(response, dict) or "type" not in response:
            raise ProtocolError(f"backend response has no type: {line!r}")
        if response["type"] == "error":
            raise BackendError(
                str(response.get("code", "unknown")), str(response.get("message", ""))
            )
        return response

    def _death_note(self, prefix: str) -> str:
        tail = ""
        if self._proc.stderr is not None:
            try:
                tail = self._proc.stderr.read() or ""
            except (ValueError, OSError):
                tail = ""
        if tail:
            prefix = f"{prefix}; stderr: {tail.strip()[-2000:]}"
        return prefix

    def hello(self) -> BackendCapabilities:
        response = self.request({"type": "hello"})
        if response.get("type") != "hello":
            raise ProtocolError(f"expected hello response, got {response.get('type')!r}")
        if response.get("protocol_version") != PROTOCOL_VERSION:
            raise ProtocolError(
                f"protocol version {response.get('protocol_version')} is not "
                f"{PROTOCOL_VERSION}"
            )
        caps = BackendCapabilities(
            tasks=list(response.get("tasks", [])),
            split_tags=[
                SplitPointSpec(s["model"], s["tag"], int(s["tensor_count"]))
                for s in response.get("split_tags", [])
            ],
            protocol_version=int(response["protocol_version"]),
        )
        self.capabilities = caps
        return caps

    def infer_full(self, image_path: str, item_id: str) -> list[Detection]:
        response = self.request(
            {"type": "infer_full", "image_path": image_path, "item_id": item_id}
        )
        return _parse_detections(response, item_id)

    def part1(self, image_path: str, split_tag: str, tensor_path: str) -> list[tuple]:
        response = self.request(
            {
                "type": "part1",
                "image_path": image_path,
                "split_tag": split_tag,
                "tensor_path": tensor_path,
            }
        )
        if response.get("type") != "tensors":
            raise ProtocolError(f"expected tensors response, got {response.get('type')!r}")
        return [tuple(s) for s in response.get("shapes", [])]

    def part2(
        self,
        tensor_path: str,
        split_tag: str,
        image_width: int,
        image_height: int,
        item_id: str,
    ) -> list[Detection]:
        response = self.request(
            {
                "type": "part2",
                "tensor_path": tensor_path,
                "split_tag": split_tag,
                "image_width": image_width,
                "image_height": image_height,
                "item_id": item_id,
            }
        )
        return _parse_detections(response, item_id)

    def send_raw(self, line: str) -> dict:
        """Push one raw line (possibly malformed) and read one response."""
        if self._proc.poll() is not None:
            raise SessionError(self._death_note("backend exited"))
        assert self._proc.stdin is not None and self._proc.stdout is not None
        self._proc.stdin.write(line.rstrip("\n") + "\n")
        self._proc.stdin.flush()
        reply = self._proc.stdout.readline()
        if not reply:
            raise SessionError(self._death_note("backend closed its stdout"))
        return json.loads(reply)

    def shutdown(self) -> None:
        if self._proc.poll() is None:
            try:
                self.request({"type": "shutdown"})
            except (SessionError, ProtocolError, BackendError):
                pass
        self.close()

    def close(self) -> None:
        for stream in (self._proc.stdin, self._proc.stdout, self._proc.stderr):
            if stream is not None:
                try:
                    stream.close()
                except OSError:
                    pass
        if self._proc.poll() is None:
            self._proc.terminate()
            try:
                self._proc.wait(timeout=5)
            except subprocess.TimeoutExpired:
                self._proc.kill()
                self._proc.wait()


def _parse_detections(response: dict, item_id: str) -> list[Detection]:
    if response.get("type") != "detections":
        raise ProtocolError(f"expected detections response, got {response.get('type')!r}")
    out = []
    for d in response.get("detections", []):
        out.append(
            Detection(
                item_id=str(d.get("item_id") or item_id),
                category=str(d["category"]),
                box=tuple(float(v) for v in d["box"]),
                score=float(d["score"]),
            )
        )
    return out


def builtin_serve_command(name: str) -> list[str]:
    """Command line that serves a built-in backend as a child process."""
    if name not in BUILTIN_BACKENDS:
        raise ValidationError(f"unknown builtin backend {name!r}")
    return [sys.executable, "-m", "vcbench.backends", "--builtin", name]


def _main(argv: list[str] | None = None) -> int:
    import argparse

    parser = argparse.ArgumentParser(description="serve a built-in inference backend")
    parser.add_argument("--builtin", default="synthetic", choices=sorted(BUILTIN_BACKENDS))
    args = parser.parse_args(argv)
    serve(BUILTIN_BACKENDS[args.builtin]())
    return 0


if __name__ == "__main__":
    sys.exit(_main())
