"""Adapter that shells out to an external codec binary.

Commands are templates over the placeholders {input}, {output}, {qp},
{width}, {height}, {fps} and {frames}. Frames travel as raw planar files in
a private temporary directory per invocation; the bitstream is whatever the
encode command writes, and its rate is eight bits per output byte.
"""

from __future__ import annotations

import shlex
import subprocess
import tempfile
from dataclasses import dataclass
from pathlib import Path

from .errors import AdapterError, ValidationError
from .frames import PlanarFrame, frame_size_bytes, read_yuv, write_yuv


@dataclass(frozen=True)
class ExternalCodecSpec:
    encode_cmd: str
    decode_cmd: str


def _render(template: str, mapping: dict[str, object]) -> list[str]:
    argv = []
    for token in shlex.split(template):
        try:
            argv.append(token.format_map(mapping))
        except KeyError as exc:
            raise ValidationError(
                f"unknown placeholder {{{exc.args[0]}}} in command template {template!r}"
            ) from exc
    if not argv:
        raise ValidationError("empty external codec command")
    return argv


def _run(argv: list[str]) -> None:
    proc = subprocess.run(argv, capture_output=True, text=True)
    if proc.returncode != 0:
        raise AdapterError(
            f"external codec command {argv[0]!r} exited with {proc.returncode}",
            stderr=proc.stderr,
        )


class ExternalCodec:
    def __init__(self, spec: ExternalCodecSpec):
        self.spec = spec

    def encode(self, frames: list[PlanarFrame], qp: int, fps: float = 30.0) -> bytes:
        first = frames[0]
        with tempfile.TemporaryDirectory(prefix="vcbench-enc-") as work:
            raw = Path(work) / "input.yuv"
            out = Path(work) / "stream.bin"
            write_yuv(raw, frames)
            argv = _render(
                self.spec.encode_cmd,
                {
                    "input": str(raw), "output": str(out), "qp": qp,
                    "width": first.width, "height": first.height,
                    "fps": fps, "frames": len(frames),
                },
            )
            _run(argv)
            if not out.exists():
                raise AdapterError(f"encode command produced no output file {out}")
            return out.read_bytes()

    def decode(
        self,
        bitstream: bytes,
        width: int,
        height: int,
        bit_depth: int,
        chroma: str,
        frame_count: int,
        qp: int = 0,
        fps: float = 30.0,
    ) -> list[PlanarFrame]:
        with tempfile.TemporaryDirectory(prefix="vcbench-dec-") as work:
            stream = Path(work) / "stream.bin"
            raw = Path(work) / "output.yuv"
            stream.write_bytes(bitstream)
            argv = _render(
                self.spec.decode_cmd,
                {
                    "input": str(stream), "output": str(raw), "qp": qp,
                    "width": width, "height": height, "fps": fps,
                    "frames": frame_count,
                },
            )
            _run(argv)
            if not raw.exists():
                raise AdapterError(f"decode command produced no output file {raw}")
            expected = frame_size_bytes(width, height, bit_depth, chroma) * frame_count
            actual = raw.stat().st_size
            if actual != expected:
                raise ValidationError(
                    f"decoded raw size {actual} does not match declared geometry "
                    f"({frame_count} frames of {expected // max(frame_count, 1)} bytes)"
                )
            return read_yuv(raw, width, height, bit_depth, chroma, frame_count)
