"""Planar frames, raw YUV and PPM I/O, and YUV to RGB conversion.

Samples are kept as uint16 regardless of bit depth so that 8- and 10-bit
content flows through the same code paths; the valid range is enforced at
construction time.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import FormatError, TruncationError, ValidationError

MONO_400 = "mono_400"
YUV_420 = "yuv_420"

# BT.709 limited-range decode matrix, 8-bit offsets.
_KR, _KG, _KB = 1.1644, 1.1644, 1.1644
_RV = 1.7927
_GU, _GV = 0.2132, 0.5329
_BU = 2.1124


def round_half_away(x: np.ndarray | float) -> np.ndarray | float:
    """Round to nearest integer, halves away from zero (the one rounding rule
    used throughout the package)."""
    if isinstance(x, np.ndarray):
        return np.sign(x) * np.floor(np.abs(x) + 0.5)
    return math.copysign(math.floor(abs(x) + 0.5), x)


@dataclass
class PlanarFrame:
    """One planar video frame: a luma plane plus optional 4:2:0 chroma.

    Chroma planes have ceil(width/2) x ceil(height/2) samples each.
    """

    width: int
    height: int
    bit_depth: int
    chroma: str
    planes: list[np.ndarray] = field(repr=False)

    def __post_init__(self):
        if self.bit_depth not in (8, 10):
            raise ValidationError(f"bit_depth must be 8 or 10, got {self.bit_depth}")
        if self.chroma not in (MONO_400, YUV_420):
            raise ValidationError(f"unknown chroma format {self.chroma!r}")
        if self.width <= 0 or self.height <= 0:
            raise ValidationError("frame dimensions must be positive")
        expected = [(self.height, self.width)]
        if self.chroma == YUV_420:
            cw = (self.width + 1) // 2
            ch = (self.height + 1) // 2
            expected += [(ch, cw), (ch, cw)]
        if len(self.planes) != len(expected):
            raise ValidationError(
                f"{self.chroma} frame needs {len(expected)} planes, got {len(self.planes)}"
            )
        maxval = (1 << self.bit_depth) - 1
        for i, (plane, shape) in enumerate(zip(self.planes, expected)):
            if plane.shape != shape:
                raise ValidationError(
                    f"plane {i} has shape {plane.shape}, expected {shape}"
                )
            if plane.dtype != np.uint16:
                raise ValidationError(f"plane {i} must be uint16, got {plane.dtype}")
            if plane.size and int(plane.max()) > maxval:
                raise ValidationError(
                    f"plane {i} holds samples above {maxval} for {self.bit_depth}-bit"
                )

    @property
    def max_value(self) -> int:
        return (1 << self.bit_depth) - 1

    def sample_count(self) -> int:
        return sum(p.size for p in self.planes)

    def copy(self) -> "PlanarFrame":
        return PlanarFrame(
            self.width, self.height, self.bit_depth, self.chroma,
            [p.copy() for p in self.planes],
        )


@dataclass
class RgbImage:
    """Interleaved 8-bit RGB image."""

    width: int
    height: int
    pixels: np.ndarray = field(repr=False)  # (height, width, 3) uint8

    def __post_init__(self):
        if self.pixels.shape != (self.height, self.width, 3):
            raise ValidationError(
                f"pixel array shape {self.pixels.shape} does not match "
                f"{self.height}x{self.width}x3"
            )
        if self.pixels.dtype != np.uint8:
            raise ValidationError("RGB pixels must be uint8")


def mono_frame(samples: np.ndarray, bit_depth: int = 8) -> PlanarFrame:
    """Wrap a 2D sample array as a mono_400 frame."""
    h, w = samples.shape
    return PlanarFrame(w, h, bit_depth, MONO_400, [samples.astype(np.uint16)])


def frame_size_bytes(width: int, height: int, bit_depth: int, chroma: str) -> int:
    samples = width * height
    if chroma == YUV_420:
        samples += 2 * (((width + 1) // 2) * ((height + 1) // 2))
    return samples * (1 if bit_depth == 8 else 2)


def read_yuv(
    path: str | Path,
    width: int,
    height: int,
    bit_depth: int = 8,
    chroma: str = YUV_420,
    frame_count: int | None = None,
) -> list[PlanarFrame]:
    """Read raw planar 4:2:0 or mono frames, 8-bit or 10-bit little-endian.

    10-bit samples are masked to their low 10 bits. If frame_count is None,
    as many whole frames as the file holds are read; a trailing partial frame
    is a truncation error stating expected vs actual byte counts.
    """
    data = Path(path).read_bytes()
    fsize = frame_size_bytes(width, height, bit_depth, chroma)
    if frame_count is None:
        frame_count = len(data) // fsize
        if frame_count == 0 or len(data) % fsize:
            raise TruncationError((len(data) // fsize + 1) * fsize, len(data), "yuv file")
    if len(data) < frame_count * fsize:
        raise TruncationError(frame_count * fsize, len(data), "yuv file")

    dtype = np.dtype(np.uint8) if bit_depth == 8 else np.dtype("<u2")
    cw, ch = (width + 1) // 2, (height + 1) // 2
    shapes = [(height, width)]
    if chroma == YUV_420:
        shapes += [(ch, cw), (ch, cw)]

    frames = []
    offset = 0
    for _ in range(frame_count):
        planes = []
        for shape in shapes:
            n = shape[0] * shape[1]
            raw = np.frombuffer(data, dtype=dtype, count=n, offset=offset)
            offset += n * dtype.itemsize
            plane = raw.astype(np.uint16)
            if bit_depth == 10:
                plane &= 0x3FF
            planes.append(plane.reshape(shape))
        frames.append(PlanarFrame(width, height, bit_depth, chroma, planes))
    return frames


def write_yuv(path: str | Path, frames: list[PlanarFrame]) -> None:
    """Write frames as raw planar samples (inverse of read_yuv)."""
    chunks = []
    for frame in frames:
        dtype = np.uint8 if frame.bit_depth == 8 else np.dtype("<u2")
        for plane in frame.planes:
            chunks.append(plane.astype(dtype).tobytes())
    Path(path).write_bytes(b"".join(chunks))


def yuv_to_rgb(frame: PlanarFrame) -> RgbImage:
    """Convert a 4:2:0 frame to 8-bit RGB with the BT.709 limited-range
    matrix and nearest-neighbor chroma upsampling."""
    if frame.chroma != YUV_420:
        raise ValidationError(
            f"chroma format {frame.chroma!r} is not supported for RGB conversion"
        )
    shift = frame.bit_depth - 8
    scale = float(1 << shift)
    y = frame.planes[0].astype(np.float64) / scale
    u = frame.planes[1].astype(np.float64) / scale
    v = frame.planes[2].astype(np.float64) / scale

    # nearest-neighbor upsample: chroma sample (i//2, j//2) serves luma (i, j)
    u = np.repeat(np.repeat(u, 2, axis=0), 2, axis=1)[: frame.height, : frame.width]
    v = np.repeat(np.repeat(v, 2, axis=0), 2, axis=1)[: frame.height, : frame.width]

    yc = _KR * (y - 16.0)
    r = yc + _RV * (v - 128.0)
    g = yc - _GU * (u - 128.0) - _GV * (v - 128.0)
    b = yc + _BU * (u - 128.0)
    rgb = np.stack([r, g, b], axis=-1)
    rgb = np.clip(round_half_away(rgb), 0, 255).astype(np.uint8)
    return RgbImage(frame.width, frame.height, rgb)


def rgb_to_luma(image: RgbImage) -> np.ndarray:
    """8-bit luma from RGB via the BT.709 primaries, halves away from zero."""
    pix = image.pixels.astype(np.float64)
    y = 0.2126 * pix[..., 0] + 0.7152 * pix[..., 1] + 0.0722 * pix[..., 2]
    return np.clip(round_half_away(y), 0, 255).astype(np.uint16)


def write_ppm(path: str | Path, image: RgbImage) -> None:
    """Write a binary P6 PPM (the mandatory RGB interchange format)."""
    header = f"P6\n{image.width} {image.height}\n255\n".encode("ascii")
    Path(path).write_bytes(header + image.pixels.tobytes())


def read_ppm(path: str | Path) -> RgbImage:
    """Read a binary P6 PPM with maxval 255."""
    data = Path(path).read_bytes()
    if not data.startswith(b"P6"):
        raise FormatError(f"{path}: not a P6 PPM")
    # header = magic, width, height, maxval as whitespace-separated tokens,
    # with '#' comments allowed between them
    tokens: list[int] = []
    pos = 2
    while len(tokens) < 3:
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        if pos < len(data) and data[pos : pos + 1] == b"#":
            while pos < len(data) and data[pos] != 0x0A:
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            raise FormatError(f"{path}: malformed PPM header")
        tokens.append(int(data[start:pos]))
    pos += 1  # single whitespace after maxval
    width, height, maxval = tokens
    if maxval != 255:
        raise FormatError(f"{path}: only maxval 255 is supported, got {maxval}")
    need = width * height * 3
    raster = data[pos : pos + need]
    if len(raster) < need:
        raise TruncationError(need, len(raster), "ppm raster")
    pixels = np.frombuffer(raster, dtype=np.uint8).reshape(height, width, 3)
    return RgbImage(width, height, pixels.copy())


def mono_to_rgb(frame: PlanarFrame) -> RgbImage:
    """Replicate a mono plane into RGB channels (8-bit output)."""
    if frame.chroma != MONO_400:
        raise ValidationError("mono_to_rgb expects a mono_400 frame")
    shift = frame.bit_depth - 8
    gray = (frame.planes[0] >> shift).astype(np.uint8)
    return RgbImage(frame.width, frame.height, np.stack([gray] * 3, axis=-1))
