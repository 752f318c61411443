"""Deterministic synthetic scenes: noisy backgrounds with bright rectangles.

All randomness comes from one splitmix64 stream seeded with the scene seed,
consumed in a fixed documented order so that identical specs produce
byte-identical frames on every platform:

  image sets   -- per item: rectangle draws, then height*width noise draws
                  in raster order
  videos       -- rectangle draws once (item index 0), then per frame the
                  noise draws
  rectangles   -- per rectangle, per attempt: four floats (width, height,
                  x, y); a candidate that overlaps an accepted rectangle
                  (closer than a 4 px gap on both axes, which also rules out
                  any pairwise IoU above 0.5) consumes the next draws, and
                  after 64 failed attempts generation stops with an error

Geometry snaps to a configurable grid (``align``); sides span 8 px up to a
quarter of the short frame side. Background sits at 0.25 of full scale and
rectangles are filled at background + contrast * (255 - background), with
uniform noise of +-noise_amplitude (in units of full scale) added per pixel.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

from .annotations import (
    IMAGE_SET,
    VIDEO_SEQUENCE,
    DatasetHandle,
    GroundTruthObject,
    frame_item_id,
)
from .errors import RunError, ValidationError
from .frames import PlanarFrame, mono_frame, round_half_away
from .rng import SplitMix64

BACKGROUND = 0.25 * 255.0
MIN_SIDE = 8
MAX_ATTEMPTS = 64
GAP = 4  # minimum clearance between rectangles, px
DEFAULT_FRAME_RATE = 30.0
CATEGORY = "object"


@dataclass(frozen=True)
class SyntheticSceneSpec:
    """Parameters of a synthetic scene.

    motion, when given, holds one (vx, vy) pixels-per-frame velocity per
    rectangle and turns the scene into a video sequence whose frames are the
    items. align snaps rectangle geometry to a pixel grid; the default of 4
    matches the reference detector's stride, so detections are exact on clean
    scenes. align=1 places rectangles at arbitrary pixels, which puts
    fractional-coverage cells near the detector threshold and makes the
    scene sensitive to coding error.
    """

    width: int = 64
    height: int = 64
    num_items: int = 20
    rects_per_item: int = 3
    contrast: float = 0.9
    noise_amplitude: float = 0.02
    seed: int = 0
    motion: tuple[tuple[float, float], ...] | None = None
    align: int = 4

    def __post_init__(self):
        if self.width < 4 * MIN_SIDE or self.height < 4 * MIN_SIDE:
            raise ValidationError("frame too small for the minimum rectangle side")
        if not 0.0 < self.contrast <= 1.0:
            raise ValidationError("contrast must be in (0, 1]")
        if not 0.0 <= self.noise_amplitude < 1.0:
            raise ValidationError("noise_amplitude must be in [0, 1)")
        if self.num_items <= 0 or self.rects_per_item <= 0:
            raise ValidationError("num_items and rects_per_item must be positive")
        if self.align < 1:
            raise ValidationError("align must be >= 1")
        if self.motion is not None and len(self.motion) != self.rects_per_item:
            raise ValidationError(
                f"motion needs {self.rects_per_item} velocities, got {len(self.motion)}"
            )


@dataclass
class SyntheticDataset:
    """Generated frames plus their dataset handle."""

    spec: SyntheticSceneSpec
    handle: DatasetHandle
    frames: dict[str, PlanarFrame] = field(repr=False)

    def digest(self) -> str:
        """SHA-256 over the raw samples of all frames in item order."""
        h = hashlib.sha256()
        for item_id in self.handle.items:
            h.update(self.frames[item_id].planes[0].tobytes())
        return h.hexdigest()


def _draw_side(rng: SplitMix64, limit: int, align: int) -> int:
    lo = -(-MIN_SIDE // align)  # first multiple of align >= MIN_SIDE
    hi = limit // align
    if hi < lo:
        raise ValidationError("frame too small for an aligned rectangle")
    return align * (lo + rng.next_index(hi - lo + 1))


def _draw_offset(rng: SplitMix64, span: int, align: int) -> int:
    return align * rng.next_index(span // align + 1)


def _separated(a: tuple[int, int, int, int], b: tuple[int, int, int, int]) -> bool:
    # true when the boxes keep at least GAP pixels of clearance on some axis
    ax, ay, aw, ah = a
    bx, by, bw, bh = b
    return (
        ax + aw + GAP <= bx
        or bx + bw + GAP <= ax
        or ay + ah + GAP <= by
        or by + bh + GAP <= ay
    )


def _draw_rects(rng: SplitMix64, spec: SyntheticSceneSpec) -> list[tuple[int, int, int, int]]:
    max_side = max(MIN_SIDE, min(spec.width, spec.height) // 4)
    rects: list[tuple[int, int, int, int]] = []
    for r in range(spec.rects_per_item):
        for _ in range(MAX_ATTEMPTS):
            w = _draw_side(rng, max_side, spec.align)
            h = _draw_side(rng, max_side, spec.align)
            x = _draw_offset(rng, spec.width - w, spec.align)
            y = _draw_offset(rng, spec.height - h, spec.align)
            cand = (x, y, w, h)
            if all(_separated(cand, other) for other in rects):
                rects.append(cand)
                break
        else:
            raise RunError(
                f"could not place rectangle {r} after {MAX_ATTEMPTS} attempts"
            )
    return rects


def _render(
    rng: SplitMix64, spec: SyntheticSceneSpec, rects: list[tuple[int, int, int, int]]
) -> PlanarFrame:
    fill = BACKGROUND + spec.contrast * (255.0 - BACKGROUND)
    canvas = np.full((spec.height, spec.width), BACKGROUND, dtype=np.float64)
    for x, y, w, h in rects:
        canvas[y : y + h, x : x + w] = fill
    noise = rng.next_float_block(spec.height * spec.width)
    canvas += (2.0 * noise.reshape(spec.height, spec.width) - 1.0) * (
        spec.noise_amplitude * 255.0
    )
    samples = np.clip(round_half_away(canvas), 0, 255).astype(np.uint16)
    return mono_frame(samples, bit_depth=8)


def generate_synthetic_dataset(spec: SyntheticSceneSpec) -> SyntheticDataset:
    rng = SplitMix64(spec.seed)
    frames: dict[str, PlanarFrame] = {}
    ground_truth: list[GroundTruthObject] = []

    if spec.motion is None:
        for i in range(spec.num_items):
            rects = _draw_rects(rng, spec)
            item_id = f"item_{i:06d}"
            frames[item_id] = _render(rng, spec, rects)
            for x, y, w, h in rects:
                ground_truth.append(
                    GroundTruthObject(item_id, CATEGORY, (x, y, x + w, y + h))
                )
        handle = DatasetHandle(IMAGE_SET, sorted(frames), ground_truth)
        return SyntheticDataset(spec, handle, frames)

    base = _draw_rects(rng, spec)
    for t in range(spec.num_items):
        item_id = frame_item_id(t)
        placed = []
        for (x0, y0, w, h), (vx, vy) in zip(base, spec.motion):
            x = min(max(x0 + vx * t, 0.0), float(spec.width - w))
            y = min(max(y0 + vy * t, 0.0), float(spec.height - h))
            placed.append((int(round_half_away(x)), int(round_half_away(y)), w, h))
        frames[item_id] = _render(rng, spec, placed)
        for track_id, (x, y, w, h) in enumerate(placed):
            ground_truth.append(
                GroundTruthObject(
                    item_id, CATEGORY, (x, y, x + w, y + h),
                    track_id=track_id, frame_index=t,
                )
            )
    handle = DatasetHandle(
        VIDEO_SEQUENCE, sorted(frames), ground_truth, frame_rate=DEFAULT_FRAME_RATE
    )
    return SyntheticDataset(spec, handle, frames)
