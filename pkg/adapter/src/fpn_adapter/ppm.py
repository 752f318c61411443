"""Reader for binary PPM images, the pixel format requests point at."""

from pathlib import Path

import numpy as np


class PpmFormatError(ValueError):
    pass


def read_ppm(path: str | Path) -> np.ndarray:
    """Parse a P6 file into an (height, width, 3) uint8 array.

    Header tokens may be separated by any whitespace and interleaved with
    '#' comments; exactly one whitespace byte separates the maxval from the
    pixel payload. Only 8-bit images (maxval 255) are accepted.
    """
    blob = Path(path).read_bytes()
    pos = 0

    def token() -> bytes:
        nonlocal pos
        while pos < len(blob):
            ch = blob[pos : pos + 1]
            if ch == b"#":
                while pos < len(blob) and blob[pos : pos + 1] != b"\n":
                    pos += 1
            elif ch.isspace():
                pos += 1
            else:
                break
        start = pos
        while pos < len(blob):
            ch = blob[pos : pos + 1]
            if ch.isspace() or ch == b"#":
                break
            pos += 1
        if start == pos:
            raise PpmFormatError(f"{path}: truncated header")
        return blob[start:pos]

    if token() != b"P6":
        raise PpmFormatError(f"{path}: not a binary PPM")
    try:
        width, height, maxval = (int(token()) for _ in range(3))
    except ValueError as exc:
        raise PpmFormatError(f"{path}: malformed header") from exc
    if width <= 0 or height <= 0:
        raise PpmFormatError(f"{path}: bad dimensions {width}x{height}")
    if maxval != 255:
        raise PpmFormatError(f"{path}: unsupported maxval {maxval}")
    pos += 1  # the single whitespace byte after maxval
    need = width * height * 3
    pixels = blob[pos : pos + need]
    if len(pixels) < need:
        raise PpmFormatError(f"{path}: truncated pixel data")
    return np.frombuffer(pixels, dtype=np.uint8).reshape(height, width, 3).copy()
