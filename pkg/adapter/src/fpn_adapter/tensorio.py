"""Tensor container used to hand feature maps across the process boundary.

Little-endian throughout: a 7-byte header (magic "FTEN", version byte,
tensor count u16) followed by one record per tensor (ndim u8 fixed at 3,
then c/h/w as u32 and a dtype byte, 0 meaning float32) and the raw payload
of c*h*w little-endian float32 values.
"""

import struct
from pathlib import Path

import numpy as np

MAGIC = b"FTEN"
VERSION = 1
DTYPE_F32 = 0

_HEADER = struct.Struct("<4sBH")
_TENSOR = struct.Struct("<B3IB")


class TensorFormatError(ValueError):
    pass


def write_tensor_file(path: str | Path, tensors: list[np.ndarray]) -> None:
    """Write (c, h, w) float32 arrays; values are stored bit-exactly."""
    chunks = [_HEADER.pack(MAGIC, VERSION, len(tensors))]
    for values in tensors:
        arr = np.ascontiguousarray(values, dtype="<f4")
        if arr.ndim != 3:
            raise TensorFormatError(f"tensors must be (c, h, w), got shape {arr.shape}")
        c, h, w = arr.shape
        chunks.append(_TENSOR.pack(3, c, h, w, DTYPE_F32))
        chunks.append(arr.tobytes())
    Path(path).write_bytes(b"".join(chunks))


def read_tensor_file(path: str | Path) -> list[np.ndarray]:
    blob = Path(path).read_bytes()
    if len(blob) < _HEADER.size or blob[:4] != MAGIC:
        raise TensorFormatError(f"{path}: not a tensor file")
    _, version, count = _HEADER.unpack_from(blob, 0)
    if version != VERSION:
        raise TensorFormatError(f"{path}: unsupported version {version}")
    offset = _HEADER.size
    tensors = []
    for index in range(count):
        if offset + _TENSOR.size > len(blob):
            raise TensorFormatError(f"{path}: truncated at tensor {index}")
        ndim, c, h, w, dtype = _TENSOR.unpack_from(blob, offset)
        offset += _TENSOR.size
        if ndim != 3:
            raise TensorFormatError(f"{path}: tensor {index} has ndim {ndim}, expected 3")
        if dtype != DTYPE_F32:
            raise TensorFormatError(f"{path}: tensor {index} has dtype code {dtype}")
        n = c * h * w
        if offset + 4 * n > len(blob):
            raise TensorFormatError(f"{path}: truncated payload at tensor {index}")
        values = np.frombuffer(blob, dtype="<f4", count=n, offset=offset)
        tensors.append(values.reshape(c, h, w).copy())
        offset += 4 * n
    return tensors
