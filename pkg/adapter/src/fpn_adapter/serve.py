"""Line-delimited JSON serving loop.

One request object per line on stdin, one response object per line on
stdout. Malformed input produces an error response, never a crash or a
hang: the session stays usable until shutdown or EOF. The model is built
on first use so a broken install or an unavailable device surfaces as an
error response to hello rather than a dead process.
"""

import argparse
import json
import sys
from typing import IO

from .model import AdapterConfig, DeviceError, FpnBackend, ModelLoadError
from .ppm import PpmFormatError, read_ppm
from .tensorio import TensorFormatError, read_tensor_file, write_tensor_file

PROTOCOL_VERSION = 1
TASKS = ("detection",)


class _Server:
    def __init__(self, config: AdapterConfig):
        self.config = config
        self._backend: FpnBackend | None = None

    def backend(self) -> FpnBackend:
        if self._backend is None:
            self._backend = FpnBackend(self.config)
        return self._backend

    def check_split(self, tag: str) -> dict | None:
        if tag != self.config.split_tag:
            return _error("unknown_split", f"split {tag!r} is not served")
        return None


def _error(code: str, message: str) -> dict:
    return {"type": "error", "code": code, "message": message}


def _detections_reply(records: list[dict], item_id: str) -> dict:
    for record in records:
        record["item_id"] = item_id
    return {"type": "detections", "detections": records}


def _on_hello(server: _Server, msg: dict) -> dict:
    backend = server.backend()
    return {
        "type": "hello",
        "protocol_version": PROTOCOL_VERSION,
        "tasks": list(TASKS),
        "split_tags": [
            {
                "model": server.config.model,
                "tag": server.config.split_tag,
                "tensor_count": backend.tensor_count,
            }
        ],
    }


def _on_infer_full(server: _Server, msg: dict) -> dict:
    image_path, item_id = msg["image_path"], msg["item_id"]
    image = read_ppm(image_path)
    return _detections_reply(server.backend().infer_full(image), item_id)


def _on_part1(server: _Server, msg: dict) -> dict:
    image_path = msg["image_path"]
    split_tag = msg["split_tag"]
    tensor_path = msg["tensor_path"]
    rejection = server.check_split(split_tag)
    if rejection is not None:
        return rejection
    tensors = server.backend().part1(read_ppm(image_path))
    write_tensor_file(tensor_path, tensors)
    return {
        "type": "tensors",
        "split_tag": split_tag,
        "tensor_path": tensor_path,
        "shapes": [list(t.shape) for t in tensors],
    }


def _on_part2(server: _Server, msg: dict) -> dict:
    tensor_path = msg["tensor_path"]
    split_tag = msg["split_tag"]
    width, height = int(msg["image_width"]), int(msg["image_height"])
    item_id = msg["item_id"]
    rejection = server.check_split(split_tag)
    if rejection is not None:
        return rejection
    backend = server.backend()
    tensors = read_tensor_file(tensor_path)
    if len(tensors) != backend.tensor_count:
        return _error(
            "runtime",
            f"{tensor_path}: expected {backend.tensor_count} tensors, "
            f"file holds {len(tensors)}",
        )
    return _detections_reply(backend.part2(tensors, width, height), item_id)


def _on_shutdown(server: _Server, msg: dict) -> dict:
    return {"type": "bye"}


_HANDLERS = {
    "hello": _on_hello,
    "infer_full": _on_infer_full,
    "part1": _on_part1,
    "part2": _on_part2,
    "shutdown": _on_shutdown,
}


def _handle(server: _Server, raw: str) -> dict:
    try:
        msg = json.loads(raw)
    except ValueError:
        return _error("protocol", "request is not valid JSON")
    if not isinstance(msg, dict):
        return _error("protocol", "request must be a JSON object")
    kind = msg.get("type")
    if not isinstance(kind, str):
        return _error("bad_request", "request has no type field")
    handler = _HANDLERS.get(kind)
    if handler is None:
        return _error("bad_request", f"unknown request type {kind!r}")
    try:
        return handler(server, msg)
    except KeyError as exc:
        return _error("bad_request", f"missing field {exc.args[0]!r}")
    except DeviceError as exc:
        return _error("device", str(exc))
    except ModelLoadError as exc:
        return _error("model", str(exc))
    except (PpmFormatError, TensorFormatError, OSError) as exc:
        return _error("runtime", str(exc))
    except (TypeError, ValueError) as exc:
        return _error("bad_request", str(exc))
    except Exception as exc:  # a surviving loop beats a stack trace mid-protocol
        return _error("runtime", f"{exc.__class__.__name__}: {exc}")


def serve(config: AdapterConfig, stdin: IO[str] = None, stdout: IO[str] = None) -> None:
    stdin = sys.stdin if stdin is None else stdin
    stdout = sys.stdout if stdout is None else stdout
    server = _Server(config)
    while True:
        raw = stdin.readline()
        if raw == "":  # EOF: the client went away
            return
        reply = _handle(server, raw)
        stdout.write(json.dumps(reply, separators=(",", ":")) + "\n")
        stdout.flush()
        if reply.get("type") == "bye":
            return


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="fpn-adapter",
        description="Serve a Faster R-CNN detector over line-delimited JSON "
        "on stdin/stdout, with the feature pyramid available as a split point.",
    )
    parser.add_argument("--model", default="faster_rcnn_r50", help="model identifier")
    parser.add_argument("--device", default="cpu", help="torch device string")
    parser.add_argument(
        "--score-threshold",
        type=float,
        default=0.0,
        help="drop detections scoring at or below this value",
    )
    parser.add_argument("--split-tag", default="fpn", help="split point to serve")
    args = parser.parse_args(argv)
    try:
        config = AdapterConfig(
            model=args.model,
            device=args.device,
            score_threshold=args.score_threshold,
            split_tag=args.split_tag,
        )
    except ValueError as exc:
        parser.error(str(exc))
    serve(config)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
