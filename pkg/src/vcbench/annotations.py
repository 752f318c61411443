"""Ground-truth containers and annotation parsers (COCO JSON, track CSV)."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

from .errors import FormatError, ValidationError

IMAGE_SET = "image_set"
VIDEO_SEQUENCE = "video_sequence"


@dataclass(frozen=True)
class GroundTruthObject:
    """One annotated object: axis-aligned box corners plus identity fields."""

    item_id: str
    category: str
    box: tuple[float, float, float, float]  # x1, y1, x2, y2
    track_id: int | None = None
    frame_index: int | None = None

    def __post_init__(self):
        x1, y1, x2, y2 = self.box
        if not (x2 >= x1 and y2 >= y1):
            raise ValidationError(f"degenerate box {self.box} on item {self.item_id!r}")


@dataclass
class DatasetHandle:
    """An ordered collection of items plus their ground truth.

    Items are ordered lexicographically by item_id; for video sequences the
    item order is the frame order and frame_rate must be positive.
    """

    kind: str
    items: list[str]
    ground_truth: list[GroundTruthObject] = field(default_factory=list)
    frame_rate: float | None = None

    def __post_init__(self):
        if self.kind not in (IMAGE_SET, VIDEO_SEQUENCE):
            raise ValidationError(f"unknown dataset kind {self.kind!r}")
        if self.kind == VIDEO_SEQUENCE:
            if self.frame_rate is None or self.frame_rate <= 0:
                raise ValidationError("video_sequence requires a positive frame_rate")
        if list(self.items) != sorted(self.items):
            raise ValidationError("items must be in lexicographic item_id order")
        if len(set(self.items)) != len(self.items):
            raise ValidationError("duplicate item_ids")

    def gt_for_item(self, item_id: str) -> list[GroundTruthObject]:
        return [g for g in self.ground_truth if g.item_id == item_id]


def parse_coco_annotations(path: str | Path) -> tuple[list[str], list[GroundTruthObject]]:
    """Parse a COCO-style detection JSON.

    Returns (item_ids sorted lexicographically, ground truth ordered by
    (image id, annotation id)). Boxes are converted from [x, y, w, h] to
    corner form. Unknown image or category references name the offending id.
    """
    try:
        blob = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: malformed JSON ({exc})") from exc

    for key in ("images", "annotations", "categories"):
        if key not in blob:
            raise FormatError(f"{path}: missing top-level key {key!r}")

    images: dict[int, str] = {}
    for img in blob["images"]:
        images[int(img["id"])] = str(img["file_name"])
    categories: dict[int, str] = {}
    for cat in blob["categories"]:
        categories[int(cat["id"])] = str(cat["name"])

    annotations = sorted(
        blob["annotations"], key=lambda a: (int(a["image_id"]), int(a["id"]))
    )
    ground_truth = []
    for ann in annotations:
        image_id = int(ann["image_id"])
        if image_id not in images:
            raise ValidationError(
                f"annotation {ann['id']} references unknown image id {image_id}"
            )
        cat_id = int(ann["category_id"])
        if cat_id not in categories:
            raise ValidationError(
                f"annotation {ann['id']} references unknown category id {cat_id}"
            )
        x, y, w, h = (float(v) for v in ann["bbox"])
        if w < 0 or h < 0:
            raise ValidationError(f"annotation {ann['id']} has negative extent")
        ground_truth.append(
            GroundTruthObject(
                item_id=images[image_id],
                category=categories[cat_id],
                box=(x, y, x + w, y + h),
            )
        )
    return sorted(images.values()), ground_truth


def write_coco_annotations(
    path: str | Path,
    items: list[str],
    ground_truth: list[GroundTruthObject],
    sizes: dict[str, tuple[int, int]] | None = None,
) -> None:
    """Write ground truth as COCO-style JSON (boxes back to [x, y, w, h]).

    Image ids follow item order; category ids follow first appearance. sizes
    maps item_id to (width, height) when known.
    """
    image_ids = {item: index + 1 for index, item in enumerate(items)}
    category_ids: dict[str, int] = {}
    for g in ground_truth:
        if g.item_id not in image_ids:
            raise ValidationError(f"ground truth references unknown item {g.item_id!r}")
        category_ids.setdefault(g.category, len(category_ids) + 1)
    blob = {
        "images": [
            {
                "id": image_ids[item],
                "file_name": item,
                **(
                    {"width": sizes[item][0], "height": sizes[item][1]}
                    if sizes and item in sizes
                    else {}
                ),
            }
            for item in items
        ],
        "annotations": [
            {
                "id": index + 1,
                "image_id": image_ids[g.item_id],
                "category_id": category_ids[g.category],
                "bbox": [g.box[0], g.box[1], g.box[2] - g.box[0], g.box[3] - g.box[1]],
            }
            for index, g in enumerate(ground_truth)
        ],
        "categories": [
            {"id": cid, "name": name} for name, cid in category_ids.items()
        ],
    }
    Path(path).write_text(json.dumps(blob, indent=1, sort_keys=True) + "\n")


def parse_track_csv(path: str | Path, category: str = "object") -> list[GroundTruthObject]:
    """Parse track ground truth rows of the form frame,track_id,x,y,w,h.

    Frame indices map to item ids via frame_item_id(). The category column is
    not part of the format; all rows share the given category.
    """
    ground_truth = []
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or row[0].lstrip().startswith("#"):
                continue
            if len(row) != 6:
                raise FormatError(f"{path}:{lineno}: expected 6 columns, got {len(row)}")
            try:
                frame = int(row[0])
                track_id = int(row[1])
                x, y, w, h = (float(v) for v in row[2:])
            except ValueError as exc:
                raise FormatError(f"{path}:{lineno}: {exc}") from exc
            ground_truth.append(
                GroundTruthObject(
                    item_id=frame_item_id(frame),
                    category=category,
                    box=(x, y, x + w, y + h),
                    track_id=track_id,
                    frame_index=frame,
                )
            )
    return ground_truth


def write_track_csv(path: str | Path, ground_truth: list[GroundTruthObject]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        for g in ground_truth:
            x1, y1, x2, y2 = g.box
            writer.writerow(
                [g.frame_index, g.track_id, _fmt(x1), _fmt(y1), _fmt(x2 - x1), _fmt(y2 - y1)]
            )


def _fmt(v: float) -> str:
    return format(v, ".10g")


def frame_item_id(frame_index: int) -> str:
    """Canonical item id for a video frame; lexicographic order matches frame order."""
    return f"frame_{frame_index:06d}"
