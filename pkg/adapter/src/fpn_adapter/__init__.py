"""Detection backend served over line-delimited JSON on stdin/stdout.

Wraps a torchvision Faster R-CNN and exposes the feature pyramid as a
split point: part1 emits the four pyramid levels as a float32 tensor
file, part2 resumes the detection heads on such a file. Runs whole-image
inference through the same protocol.
"""

from .model import (
    PUBLISHED_SPLITS,
    AdapterConfig,
    DeviceError,
    FpnBackend,
    ModelLoadError,
)
from .ppm import PpmFormatError, read_ppm
from .serve import PROTOCOL_VERSION, main, serve
from .tensorio import TensorFormatError, read_tensor_file, write_tensor_file

__version__ = "0.1.0"
