"""Reference predictive codec, null codec, and their shared container.

The reference codec is sample-wise DPCM: prediction from the reconstructed
left neighbor (first column from the neighbor above, first sample from
mid-scale), residuals quantized with step 2^((qp-4)/6), signed levels mapped
to order-0 exp-Golomb. In low_delay mode non-refresh frames predict every
sample from the co-located reconstructed sample of the previous frame.

All coding-loop state is integer; the only floating point is the step, which
enters through the level computation on exact doubles with halves rounded
away from zero. That keeps bitstreams byte-identical across platforms.

Container layout (little-endian): magic "FCEB", version u8 (1 = reference,
2 = null), width u32, height u32, bit_depth u8, chroma u8 (0 = mono_400,
1 = yuv_420), frame_count u32, qp u8, temporal_mode u8 (0 = all_intra,
1 = low_delay), intra_period u16; then per frame a u32 byte length and the
byte-aligned payload.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass

import numpy as np

from . import bitio
from .errors import CorruptionError, FormatError, ValidationError
from .frames import MONO_400, YUV_420, PlanarFrame

MAGIC = b"FCEB"
VERSION_REFERENCE = 1
VERSION_NULL = 2
ALL_INTRA = "all_intra"
LOW_DELAY = "low_delay"
_CHROMA_CODES = {MONO_400: 0, YUV_420: 1}
_CHROMA_NAMES = {v: k for k, v in _CHROMA_CODES.items()}
_MODE_CODES = {ALL_INTRA: 0, LOW_DELAY: 1}
_MODE_NAMES = {v: k for k, v in _MODE_CODES.items()}
_HEADER = struct.Struct("<4sBIIBBIBBH")


@dataclass(frozen=True)
class CodecParams:
    """Encoder knobs: quantizer index, temporal structure, refresh period."""

    qp: int
    temporal_mode: str = ALL_INTRA
    intra_period: int = 32

    def __post_init__(self):
        if not 0 <= self.qp <= 63:
            raise ValidationError(f"qp must be in [0, 63], got {self.qp}")
        if self.temporal_mode not in _MODE_CODES:
            raise ValidationError(f"unknown temporal_mode {self.temporal_mode!r}")
        if self.intra_period < 1:
            raise ValidationError(f"intra_period must be >= 1, got {self.intra_period}")


def qp_to_step(qp: int) -> float:
    """Quantization step, doubling every 6 qp with step 1.0 at qp 4."""
    if not 0 <= qp <= 63:
        raise ValidationError(f"qp must be in [0, 63], got {qp}")
    return 2.0 ** ((qp - 4) / 6.0)


def _quant_vec(r: np.ndarray, step: float) -> np.ndarray:
    t = np.floor(np.abs(r) / step + 0.5).astype(np.int64)
    return np.where(r >= 0, t, -t)


def _dequant_vec(q: np.ndarray, step: float) -> np.ndarray:
    d = np.floor(np.abs(q) * step + 0.5).astype(np.int64)
    return np.where(q >= 0, d, -d)


def _quant_scalar(r: int, step: float) -> int:
    t = math.floor(abs(r) / step + 0.5)
    return t if r >= 0 else -t


def _dequant_scalar(q: int, step: float) -> int:
    d = math.floor(abs(q) * step + 0.5)
    return d if q >= 0 else -d


def _encode_plane_intra(
    x: np.ndarray, step: float, maxval: int, mid: int
) -> tuple[np.ndarray, np.ndarray]:
    """Returns (levels, reconstruction). Rows share no state, so the raster
    recursion is swept column by column with all rows in one vector op."""
    h, w = x.shape
    x = x.astype(np.int64)
    q = np.empty((h, w), dtype=np.int64)
    recon = np.empty((h, w), dtype=np.int64)
    pred = mid
    for i in range(h):
        qi = _quant_scalar(int(x[i, 0]) - pred, step)
        q[i, 0] = qi
        pred = min(max(pred + _dequant_scalar(qi, step), 0), maxval)
        recon[i, 0] = pred
    for j in range(1, w):
        qj = _quant_vec(x[:, j] - recon[:, j - 1], step)
        q[:, j] = qj
        recon[:, j] = np.clip(recon[:, j - 1] + _dequant_vec(qj, step), 0, maxval)
    return q, recon


def _decode_plane_intra(
    q: np.ndarray, step: float, maxval: int, mid: int
) -> np.ndarray:
    h, w = q.shape
    d = _dequant_vec(q, step)
    recon = np.empty((h, w), dtype=np.int64)
    pred = mid
    for i in range(h):
        pred = min(max(pred + int(d[i, 0]), 0), maxval)
        recon[i, 0] = pred
    for j in range(1, w):
        recon[:, j] = np.clip(recon[:, j - 1] + d[:, j], 0, maxval)
    return recon


def _encode_plane_inter(
    x: np.ndarray, prev: np.ndarray, step: float, maxval: int
) -> tuple[np.ndarray, np.ndarray]:
    q = _quant_vec(x.astype(np.int64) - prev, step)
    recon = np.clip(prev + _dequant_vec(q, step), 0, maxval)
    return q, recon


def _decode_plane_inter(
    q: np.ndarray, prev: np.ndarray, step: float, maxval: int
) -> np.ndarray:
    return np.clip(prev + _dequant_vec(q, step), 0, maxval)


def _is_intra(index: int, params: CodecParams) -> bool:
    if params.temporal_mode == ALL_INTRA or index == 0:
        return True
    return index % params.intra_period == 0


def _check_frames(frames: list[PlanarFrame]) -> PlanarFrame:
    if not frames:
        raise ValidationError("no frames to encode")
    first = frames[0]
    for i, f in enumerate(frames[1:], start=1):
        if (f.width, f.height, f.bit_depth, f.chroma) != (
            first.width, first.height, first.bit_depth, first.chroma,
        ):
            raise ValidationError(f"frame {i} geometry differs from frame 0")
    return first


def _pack_header(version: int, first: PlanarFrame, count: int, params: CodecParams) -> bytes:
    return _HEADER.pack(
        MAGIC, version, first.width, first.height, first.bit_depth,
        _CHROMA_CODES[first.chroma], count, params.qp,
        _MODE_CODES[params.temporal_mode], params.intra_period,
    )


def parse_header(data: bytes) -> dict:
    if len(data) < _HEADER.size:
        raise FormatError(f"bitstream shorter than its {_HEADER.size}-byte header")
    magic, version, width, height, bit_depth, chroma, count, qp, mode, period = (
        _HEADER.unpack_from(data)
    )
    if magic != MAGIC:
        raise FormatError("bad bitstream magic")
    if version not in (VERSION_REFERENCE, VERSION_NULL):
        raise FormatError(f"unsupported bitstream version {version}")
    if chroma not in _CHROMA_NAMES:
        raise FormatError(f"unknown chroma code {chroma}")
    if mode not in _MODE_NAMES:
        raise FormatError(f"unknown temporal_mode code {mode}")
    return {
        "version": version,
        "width": width,
        "height": height,
        "bit_depth": bit_depth,
        "chroma": _CHROMA_NAMES[chroma],
        "frame_count": count,
        "qp": qp,
        "temporal_mode": _MODE_NAMES[mode],
        "intra_period": period,
    }


def _iter_payloads(data: bytes, frame_count: int):
    offset = _HEADER.size
    for i in range(frame_count):
        if len(data) < offset + 4:
            raise CorruptionError(f"missing length prefix for frame {i}")
        (length,) = struct.unpack_from("<I", data, offset)
        offset += 4
        if len(data) < offset + length:
            raise CorruptionError(
                f"frame {i} payload truncated: declared {length} bytes, "
                f"{len(data) - offset} available"
            )
        yield data[offset : offset + length]
        offset += length


def payload_sizes(data: bytes) -> list[int]:
    """Byte length of every frame payload in a container, in frame order."""
    info = parse_header(data)
    return [len(p) for p in _iter_payloads(data, info["frame_count"])]


def encode_reference(frames: list[PlanarFrame], params: CodecParams) -> bytes:
    first = _check_frames(frames)
    step = qp_to_step(params.qp)
    maxval = first.max_value
    mid = 1 << (first.bit_depth - 1)

    out = [_pack_header(VERSION_REFERENCE, first, len(frames), params)]
    prev_recon: list[np.ndarray] | None = None
    for index, frame in enumerate(frames):
        level_arrays = []
        recon_planes = []
        for p, plane in enumerate(frame.planes):
            if _is_intra(index, params) or prev_recon is None:
                q, recon = _encode_plane_intra(plane, step, maxval, mid)
            else:
                q, recon = _encode_plane_inter(plane, prev_recon[p], step, maxval)
            level_arrays.append(q.ravel())
            recon_planes.append(recon)
        prev_recon = recon_planes
        m = bitio.signed_to_unsigned(np.concatenate(level_arrays))
        payload = bitio.pack_bits(bitio.expgolomb_encode(m))
        out.append(struct.pack("<I", len(payload)))
        out.append(payload)
    return b"".join(out)


def decode_reference(data: bytes) -> list[PlanarFrame]:
    info = parse_header(data)
    if info["version"] != VERSION_REFERENCE:
        raise FormatError(
            f"bitstream version {info['version']} is not a reference-codec stream"
        )
    params = CodecParams(info["qp"], info["temporal_mode"], max(info["intra_period"], 1))
    step = qp_to_step(params.qp)
    maxval = (1 << info["bit_depth"]) - 1
    mid = 1 << (info["bit_depth"] - 1)
    shapes = _plane_shapes(info)

    frames = []
    prev_recon: list[np.ndarray] | None = None
    for index, payload in enumerate(_iter_payloads(data, info["frame_count"])):
        bits = bitio.unpack_bits(payload)
        total = sum(h * w for h, w in shapes)
        levels = bitio.unsigned_to_signed(bitio.expgolomb_decode(bits, total))
        recon_planes = []
        offset = 0
        for p, (h, w) in enumerate(shapes):
            q = levels[offset : offset + h * w].reshape(h, w)
            offset += h * w
            if _is_intra(index, params) or prev_recon is None:
                recon = _decode_plane_intra(q, step, maxval, mid)
            else:
                recon = _decode_plane_inter(q, prev_recon[p], step, maxval)
            recon_planes.append(recon)
        prev_recon = recon_planes
        frames.append(
            PlanarFrame(
                info["width"], info["height"], info["bit_depth"], info["chroma"],
                [r.astype(np.uint16) for r in recon_planes],
            )
        )
    return frames


def encode_null(frames: list[PlanarFrame]) -> bytes:
    """Verbatim samples at bit_depth bits each; exact decode."""
    first = _check_frames(frames)
    params = CodecParams(0, ALL_INTRA, 1)
    out = [_pack_header(VERSION_NULL, first, len(frames), params)]
    for frame in frames:
        # one contiguous bit array per frame: planes are not byte-aligned
        samples = np.concatenate([plane.ravel() for plane in frame.planes])
        payload = bitio.pack_values(samples, frame.bit_depth)
        out.append(struct.pack("<I", len(payload)))
        out.append(payload)
    return b"".join(out)


def decode_null(data: bytes) -> list[PlanarFrame]:
    info = parse_header(data)
    if info["version"] != VERSION_NULL:
        raise FormatError(f"bitstream version {info['version']} is not a null stream")
    shapes = _plane_shapes(info)
    frames = []
    for payload in _iter_payloads(data, info["frame_count"]):
        planes = []
        offset_bits = 0
        bits_per = info["bit_depth"]
        for h, w in shapes:
            # each plane starts at a bit offset inside the frame payload
            start_byte, start_bit = divmod(offset_bits, 8)
            chunk = payload[start_byte:]
            values = bitio.unpack_bits(chunk)
            need = start_bit + bits_per * h * w
            if len(values) < need:
                raise CorruptionError("null payload too short for declared geometry")
            mat = values[start_bit : start_bit + bits_per * h * w]
            plane = (
                mat.reshape(h * w, bits_per).astype(np.uint64)
                @ (1 << np.arange(bits_per - 1, -1, -1, dtype=np.uint64))
            )
            planes.append(plane.reshape(h, w).astype(np.uint16))
            offset_bits += bits_per * h * w
        frames.append(
            PlanarFrame(
                info["width"], info["height"], info["bit_depth"], info["chroma"], planes
            )
        )
    return frames


def decode(data: bytes) -> list[PlanarFrame]:
    """Route a bitstream to the decoder matching its version byte."""
    info = parse_header(data)
    if info["version"] == VERSION_REFERENCE:
        return decode_reference(data)
    return decode_null(data)


def _plane_shapes(info: dict) -> list[tuple[int, int]]:
    shapes = [(info["height"], info["width"])]
    if info["chroma"] == YUV_420:
        ch = (info["height"] + 1) // 2
        cw = (info["width"] + 1) // 2
        shapes += [(ch, cw), (ch, cw)]
    return shapes


def distortion_bound(qp: int) -> int:
    """Worst-case absolute reconstruction error of the reference codec."""
    return math.ceil(qp_to_step(qp) / 2.0)
