"""Tensor interchange file used between harness and backend processes.

Little-endian layout: magic "FTEN", version u8, tensor count u16, then per
tensor a header (ndim u8 = 3, three u32 dims, dtype u8 = 0 for float32)
followed immediately by its channel-major float32 payload.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .errors import FormatError, TruncationError
from .packing import FeatureTensor, FeatureTensorSet

MAGIC = b"FTEN"
VERSION = 1
DTYPE_F32 = 0


def write_tensor_file(path: str | Path, tensor_set: FeatureTensorSet) -> None:
    chunks = [struct.pack("<4sBH", MAGIC, VERSION, len(tensor_set.tensors))]
    for tensor in tensor_set.tensors:
        c, h, w = tensor.shape
        chunks.append(struct.pack("<B3IB", 3, c, h, w, DTYPE_F32))
        chunks.append(tensor.values.astype("<f4").tobytes())
    Path(path).write_bytes(b"".join(chunks))


def read_tensor_file(path: str | Path, split_tag: str = "") -> FeatureTensorSet:
    blob = Path(path).read_bytes()
    if len(blob) < 7 or blob[:4] != MAGIC:
        raise FormatError(f"{path}: not a tensor file")
    version, count = struct.unpack_from("<BH", blob, 4)
    if version != VERSION:
        raise FormatError(f"{path}: unsupported tensor file version {version}")
    offset = 7
    tensors = []
    for i in range(count):
        if len(blob) < offset + 14:
            raise TruncationError(offset + 14, len(blob), "tensor header")
        ndim, c, h, w, dtype = struct.unpack_from("<B3IB", blob, offset)
        offset += 14
        if ndim != 3:
            raise FormatError(f"{path}: tensor {i} has ndim {ndim}, expected 3")
        if dtype != DTYPE_F32:
            raise FormatError(f"{path}: tensor {i} has unknown dtype code {dtype}")
        n = c * h * w
        end = offset + 4 * n
        if len(blob) < end:
            raise TruncationError(end, len(blob), "tensor payload")
        values = np.frombuffer(blob, dtype="<f4", count=n, offset=offset)
        offset = end
        tensors.append(FeatureTensor(values.reshape(c, h, w).copy()))
    return FeatureTensorSet(split_tag, tensors)
