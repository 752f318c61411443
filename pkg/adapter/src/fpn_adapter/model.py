"""Faster R-CNN with its feature pyramid opened as a split point.

The network runs either whole (image in, detections out) or in two halves:
part1 covers the input transform and the backbone and hands out the four
pyramid levels "0".."3"; part2 rebuilds the coarse "pool" level from level
"3", replays the resize/pad geometry, and runs the proposal and box heads.
Feature tensors survive the float32 container bit-exactly, so both routes
produce the same boxes.
"""

from collections import OrderedDict
from dataclasses import dataclass
from pathlib import Path
from urllib.parse import urlsplit

import numpy as np
import torch
import torch.nn.functional as F
from torchvision.models.detection import (
    FasterRCNN_ResNet50_FPN_Weights,
    fasterrcnn_resnet50_fpn,
)

# split tags each model identifier publishes; part1/part2 accept only these
PUBLISHED_SPLITS: dict[str, tuple[str, ...]] = {
    "faster_rcnn_r50": ("fpn",),
}

# pyramid levels transmitted at the "fpn" split; "pool" is derived, not sent
_FPN_KEYS = ("0", "1", "2", "3")

_CATEGORIES = FasterRCNN_ResNet50_FPN_Weights.COCO_V1.meta["categories"]


class ModelLoadError(RuntimeError):
    pass


class DeviceError(RuntimeError):
    pass


@dataclass(frozen=True)
class AdapterConfig:
    model: str = "faster_rcnn_r50"
    device: str = "cpu"
    score_threshold: float = 0.0
    split_tag: str = "fpn"

    def __post_init__(self):
        if self.model not in PUBLISHED_SPLITS:
            known = ", ".join(sorted(PUBLISHED_SPLITS))
            raise ValueError(f"unknown model {self.model!r} (known: {known})")
        if self.split_tag not in PUBLISHED_SPLITS[self.model]:
            raise ValueError(
                f"model {self.model!r} does not publish split {self.split_tag!r}"
            )
        if not 0.0 <= self.score_threshold <= 1.0:
            raise ValueError(
                f"score_threshold must be within [0, 1], got {self.score_threshold}"
            )


def _category_name(label: int) -> str:
    if 0 <= label < len(_CATEGORIES):
        return _CATEGORIES[label]
    return f"label_{label}"


def _cached_coco_weights() -> FasterRCNN_ResNet50_FPN_Weights | None:
    """Return the COCO checkpoint only if it is already on disk.

    Serving must never reach for the network, so a missing checkpoint means
    deterministic random initialization instead of a download attempt.
    """
    weights = FasterRCNN_ResNet50_FPN_Weights.COCO_V1
    filename = Path(urlsplit(weights.url).path).name
    if (Path(torch.hub.get_dir()) / "checkpoints" / filename).exists():
        return weights
    return None


def _resolve_device(name: str) -> torch.device:
    try:
        device = torch.device(name)
    except RuntimeError as exc:
        raise DeviceError(str(exc)) from exc
    if device.type == "cuda" and not torch.cuda.is_available():
        raise DeviceError(f"device {name!r} requested but cuda is unavailable")
    return device


def _build_model(config: AdapterConfig) -> torch.nn.Module:
    if config.model != "faster_rcnn_r50":
        raise ModelLoadError(f"no builder for model {config.model!r}")
    kwargs = {"box_score_thresh": config.score_threshold}
    weights = _cached_coco_weights()
    try:
        # fixed seed: every process materializes identical weights, so
        # detections agree across sessions even without a checkpoint
        torch.manual_seed(0)
        if weights is not None:
            return fasterrcnn_resnet50_fpn(weights=weights, **kwargs)
        return fasterrcnn_resnet50_fpn(weights=None, weights_backbone=None, **kwargs)
    except Exception as exc:
        raise ModelLoadError(f"could not build {config.model!r}: {exc}") from exc


def _as_records(outputs: dict) -> list[dict]:
    boxes = outputs["boxes"].detach().cpu().numpy()
    labels = outputs["labels"].detach().cpu().tolist()
    scores = outputs["scores"].detach().cpu().tolist()
    return [
        {
            "category": _category_name(int(label)),
            "box": [float(v) for v in box],
            "score": float(score),
        }
        for box, label, score in zip(boxes, labels, scores)
    ]


class FpnBackend:
    """Evaluation-mode detector; all entry points are deterministic."""

    def __init__(self, config: AdapterConfig):
        self.config = config
        self.device = _resolve_device(config.device)
        try:
            self._model = _build_model(config).to(self.device).eval()
        except ModelLoadError:
            raise
        except Exception as exc:
            raise ModelLoadError(f"could not move model to {config.device!r}: {exc}") from exc

    @property
    def tensor_count(self) -> int:
        return len(_FPN_KEYS)

    def _prepare(self, image: np.ndarray) -> torch.Tensor:
        if image.ndim != 3 or image.shape[2] != 3:
            raise ValueError(f"expected an rgb image, got shape {image.shape}")
        t = torch.from_numpy(image.astype(np.float32) / 255.0)
        return t.permute(2, 0, 1).to(self.device)

    @torch.inference_mode()
    def infer_full(self, image: np.ndarray) -> list[dict]:
        outputs = self._model([self._prepare(image)])[0]
        return _as_records(outputs)

    @torch.inference_mode()
    def part1(self, image: np.ndarray) -> list[np.ndarray]:
        """Run transform and backbone; return pyramid levels "0".."3"."""
        images, _ = self._model.transform([self._prepare(image)], None)
        features = self._model.backbone(images.tensors)
        return [features[key].squeeze(0).cpu().numpy() for key in _FPN_KEYS]

    @torch.inference_mode()
    def part2(
        self, tensors: list[np.ndarray], image_width: int, image_height: int
    ) -> list[dict]:
        """Resume the heads on transmitted pyramid levels."""
        if len(tensors) != len(_FPN_KEYS):
            raise ValueError(
                f"split carries {len(_FPN_KEYS)} tensors, got {len(tensors)}"
            )
        features = OrderedDict()
        for key, values in zip(_FPN_KEYS, tensors):
            arr = np.ascontiguousarray(values, dtype=np.float32)
            features[key] = torch.from_numpy(arr).unsqueeze(0).to(self.device)
        # the backbone appends a stride-2 subsample of the coarsest level;
        # recomputing it here keeps it out of the transmitted set
        features["pool"] = F.max_pool2d(features["3"], kernel_size=1, stride=2, padding=0)
        # a zero image of the original size replays the exact resize and
        # padding geometry, which anchors and box clipping depend on
        dummy = torch.zeros(
            (3, image_height, image_width), dtype=torch.float32, device=self.device
        )
        images, _ = self._model.transform([dummy], None)
        proposals, _ = self._model.rpn(images, features, None)
        detections, _ = self._model.roi_heads(features, proposals, images.image_sizes, None)
        detections = self._model.transform.postprocess(
            detections, images.image_sizes, [(image_height, image_width)]
        )
        return _as_records(detections[0])
