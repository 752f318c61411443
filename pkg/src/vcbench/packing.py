"""Quantize feature tensors and tile them into one codeable mono frame.

Quantization is joint min-max over the whole tensor set. Each tensor's
channels tile into a near-square grid in raster scan order; the per-tensor
grids stack vertically into a single mono_400 frame whose width is the
widest grid, right-padded with the quantized code of value 0.0.

The metadata sidecar is a little-endian binary blob:

  magic "FPMD", version u8, bit_depth u8, tensor count u16, then per tensor
  six u32 fields (channels, height, width, grid_cols, grid_rows, y_offset)
  in that order, then global_min and global_max as IEEE-754 binary32.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import CorruptionError, FormatError, ValidationError
from .frames import MONO_400, PlanarFrame, round_half_away

MAGIC = b"FPMD"
VERSION = 1
DEGENERATE_RANGE = 1e-12


@dataclass
class FeatureTensor:
    """One intermediate feature tensor, channels x height x width float32."""

    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        if self.values.ndim != 3:
            raise ValidationError(f"feature tensor must be 3D, got {self.values.ndim}D")
        self.values = np.ascontiguousarray(self.values, dtype=np.float32)

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.values.shape  # type: ignore[return-value]


@dataclass
class FeatureTensorSet:
    """Ordered tensors produced at one split point of one item."""

    split_tag: str
    tensors: list[FeatureTensor]

    def __post_init__(self):
        if not self.tensors:
            raise ValidationError("empty tensor set")


@dataclass(frozen=True)
class TensorLayout:
    channels: int
    height: int
    width: int
    grid_cols: int
    grid_rows: int
    y_offset: int

    @property
    def grid_shape(self) -> tuple[int, int]:
        return self.grid_rows * self.height, self.grid_cols * self.width


@dataclass
class PackingMetadata:
    """Everything unpack needs to invert pack, minus the frame itself."""

    bit_depth: int
    layouts: list[TensorLayout]
    global_min: float
    global_max: float
    frame_width: int
    frame_height: int

    @property
    def scale(self) -> float:
        span = self.global_max - self.global_min
        if span < DEGENERATE_RANGE:
            return 1.0
        return span / ((1 << self.bit_depth) - 1)


@dataclass
class PackedFrameSet:
    """A packed mono frame plus its metadata; split_tag rides along in memory
    only (it is not part of the sidecar and is re-supplied when loading)."""

    frame: PlanarFrame
    metadata: PackingMetadata
    split_tag: str = ""


def grid_geometry(channels: int) -> tuple[int, int]:
    """Near-square raster grid: columns first, then the rows they require."""
    grid_cols = math.ceil(math.sqrt(channels))
    grid_rows = math.ceil(channels / grid_cols)
    return grid_cols, grid_rows


def quantize_set(
    tensors: list[FeatureTensor], bit_depth: int
) -> tuple[list[np.ndarray], float, float, float]:
    """Joint min-max quantization; returns (codes, global_min, global_max, scale)."""
    if bit_depth not in (8, 10):
        raise ValidationError(f"packing bit_depth must be 8 or 10, got {bit_depth}")
    for i, t in enumerate(tensors):
        if not np.isfinite(t.values).all():
            raise ValidationError(f"tensor {i} contains non-finite values")
    global_min = float(min(t.values.min() for t in tensors))
    global_max = float(max(t.values.max() for t in tensors))
    span = global_max - global_min
    maxcode = (1 << bit_depth) - 1
    if span < DEGENERATE_RANGE:
        codes = [np.zeros(t.shape, dtype=np.uint16) for t in tensors]
        return codes, global_min, global_max, 1.0
    scale = span / maxcode
    codes = []
    for t in tensors:
        q = round_half_away((t.values.astype(np.float64) - global_min) / scale)
        codes.append(np.clip(q, 0, maxcode).astype(np.uint16))
    return codes, global_min, global_max, scale


def zero_code(global_min: float, scale: float, bit_depth: int) -> int:
    """Quantized code of the real value 0.0, clipped to the code range."""
    q = int(round_half_away((0.0 - global_min) / scale))
    return min(max(q, 0), (1 << bit_depth) - 1)


def tile_channels(codes: np.ndarray, pad_value: int) -> np.ndarray:
    """Arrange (channels, h, w) codes into a raster-scan channel grid."""
    channels, h, w = codes.shape
    grid_cols, grid_rows = grid_geometry(channels)
    grid = np.full((grid_rows * h, grid_cols * w), pad_value, dtype=np.uint16)
    for k in range(channels):
        row, col = divmod(k, grid_cols)
        grid[row * h : (row + 1) * h, col * w : (col + 1) * w] = codes[k]
    return grid


def pack(tensor_set: FeatureTensorSet, bit_depth: int = 10) -> PackedFrameSet:
    codes, global_min, global_max, scale = quantize_set(tensor_set.tensors, bit_depth)
    pad = zero_code(global_min, scale, bit_depth)

    grids = [tile_channels(c, pad) for c in codes]
    frame_width = max(g.shape[1] for g in grids)
    layouts = []
    rows = []
    y = 0
    for tensor, grid in zip(tensor_set.tensors, grids):
        channels, h, w = tensor.shape
        grid_cols, grid_rows = grid_geometry(channels)
        layouts.append(TensorLayout(channels, h, w, grid_cols, grid_rows, y))
        if grid.shape[1] < frame_width:
            padding = np.full(
                (grid.shape[0], frame_width - grid.shape[1]), pad, dtype=np.uint16
            )
            grid = np.hstack([grid, padding])
        rows.append(grid)
        y += grid.shape[0]

    samples = np.vstack(rows)
    frame = PlanarFrame(frame_width, y, bit_depth, MONO_400, [samples])
    metadata = PackingMetadata(bit_depth, layouts, global_min, global_max, frame_width, y)
    return PackedFrameSet(frame, metadata, tensor_set.split_tag)


def unpack(packed: PackedFrameSet) -> FeatureTensorSet:
    """Structural inverse of pack plus dequantization."""
    frame, meta = packed.frame, packed.metadata
    plane = frame.planes[0]
    expected_h = sum(l.grid_shape[0] for l in meta.layouts)
    expected_w = max(l.grid_shape[1] for l in meta.layouts)
    if plane.shape != (expected_h, expected_w) or (
        meta.frame_height,
        meta.frame_width,
    ) != plane.shape:
        raise CorruptionError(
            f"metadata implies a {expected_h}x{expected_w} frame "
            f"(recorded {meta.frame_height}x{meta.frame_width}), "
            f"got {plane.shape[0]}x{plane.shape[1]}"
        )
    if frame.bit_depth != meta.bit_depth:
        raise CorruptionError(
            f"frame bit_depth {frame.bit_depth} != metadata bit_depth {meta.bit_depth}"
        )
    span = meta.global_max - meta.global_min
    scale = meta.scale
    tensors = []
    for layout in meta.layouts:
        tile = plane[layout.y_offset : layout.y_offset + layout.grid_shape[0]]
        codes = np.empty((layout.channels, layout.height, layout.width), dtype=np.uint16)
        for k in range(layout.channels):
            row, col = divmod(k, layout.grid_cols)
            codes[k] = tile[
                row * layout.height : (row + 1) * layout.height,
                col * layout.width : (col + 1) * layout.width,
            ]
        if span < DEGENERATE_RANGE:
            values = np.full(codes.shape, meta.global_min, dtype=np.float64)
        else:
            values = meta.global_min + codes.astype(np.float64) * scale
        tensors.append(FeatureTensor(values.astype(np.float32)))
    return FeatureTensorSet(packed.split_tag, tensors)


def serialize_metadata(meta: PackingMetadata) -> bytes:
    head = struct.pack(
        "<4sBBH", MAGIC, VERSION, meta.bit_depth, len(meta.layouts)
    )
    body = b"".join(
        struct.pack(
            "<6I", l.channels, l.height, l.width, l.grid_cols, l.grid_rows, l.y_offset
        )
        for l in meta.layouts
    )
    tail = struct.pack("<2f", meta.global_min, meta.global_max)
    return head + body + tail


def deserialize_metadata(blob: bytes) -> PackingMetadata:
    if len(blob) < 8 or blob[:4] != MAGIC:
        raise FormatError("not a packing metadata blob")
    version, bit_depth, count = struct.unpack_from("<BBH", blob, 4)
    if version != VERSION:
        raise FormatError(f"unsupported packing metadata version {version}")
    need = 8 + 24 * count + 8
    if len(blob) < need:
        raise FormatError(f"metadata blob truncated: expected {need} bytes, got {len(blob)}")
    layouts = []
    for i in range(count):
        fields = struct.unpack_from("<6I", blob, 8 + 24 * i)
        layouts.append(TensorLayout(*fields))
    global_min, global_max = struct.unpack_from("<2f", blob, 8 + 24 * count)
    frame_width = max(l.grid_shape[1] for l in layouts)
    frame_height = sum(l.grid_shape[0] for l in layouts)
    return PackingMetadata(
        bit_depth, layouts, float(global_min), float(global_max), frame_width, frame_height
    )
