"""Protocol conformance checks that any backend command must pass.

Each check starts its own session from the given command line, so the suite
also exercises session startup and teardown repeatedly. Checks raise
AssertionError (or a protocol exception) on violation; run_conformance
executes all of them and returns the check names in execution order.

The same suite validates the built-in backends and any external adapter;
box_tolerance exists because a backend whose split path re-runs floating
point work may differ from its full path by rounding, which the built-ins
must not.
"""

from __future__ import annotations

from pathlib import Path

from .backends import BackendError, BackendSession, registry_tensor_count
from .errors import ValidationError

_PROBE_TAG = "no_such_split_tag"


def _open(command: list[str]) -> BackendSession:
    session = BackendSession(command)
    session.hello()
    return session


def check_handshake(command: list[str]) -> None:
    """hello must declare a protocol version, at least one task, and counts
    for every advertised split tag."""
    with BackendSession(command) as session:
        caps = session.hello()
        assert caps.tasks, "backend declares no tasks"
        for spec in caps.split_tags:
            assert spec.tensor_count >= 1, f"split {spec.tag!r} declares no tensors"
            try:
                expected = registry_tensor_count(spec.tag)
            except ValidationError:
                continue  # unregistered tags carry their own contract
            assert spec.tensor_count == expected, (
                f"split {spec.tag!r} declares {spec.tensor_count} tensors, "
                f"registry says {expected}"
            )
        session.shutdown()


def check_infer_full(command: list[str], image_path: str | Path) -> None:
    """Detections must be well-formed: ordered corners, finite scores in [0,1]."""
    with _open(command) as session:
        detections = session.infer_full(str(image_path), "conformance_item")
        for d in detections:
            x1, y1, x2, y2 = d.box
            assert x2 >= x1 and y2 >= y1, f"ill-ordered box {d.box}"
            assert 0.0 <= d.score <= 1.0, f"score {d.score} outside [0,1]"
            assert d.category, "empty category"
        session.shutdown()


def check_tensor_count(
    command: list[str], image_path: str | Path, split_tag: str, work_dir: str | Path
) -> None:
    """part1 must emit exactly the declared number of tensors."""
    with _open(command) as session:
        declared = {s.tag: s.tensor_count for s in session.capabilities.split_tags}
        assert split_tag in declared, f"backend does not serve {split_tag!r}"
        tensor_path = str(Path(work_dir) / "conformance_tensors.ften")
        shapes = session.part1(str(image_path), split_tag, tensor_path)
        assert len(shapes) == declared[split_tag], (
            f"part1 wrote {len(shapes)} tensors, hello declared {declared[split_tag]}"
        )
        assert Path(tensor_path).exists(), "part1 did not write the tensor file"
        session.shutdown()


def check_compositionality(
    command: list[str],
    image_path: str | Path,
    split_tag: str,
    work_dir: str | Path,
    box_tolerance: float = 0.0,
) -> None:
    """infer_full must equal part2 applied to part1's tensors."""
    from .frames import read_ppm

    image = read_ppm(image_path)
    with _open(command) as session:
        full = session.infer_full(str(image_path), "item")
        tensor_path = str(Path(work_dir) / "conformance_split.ften")
        session.part1(str(image_path), split_tag, tensor_path)
        split = session.part2(
            tensor_path, split_tag, image.width, image.height, "item"
        )
        assert len(full) == len(split), (
            f"full path found {len(full)} objects, split path {len(split)}"
        )
        for a, b in zip(full, split):
            assert a.category == b.category
            for va, vb in zip(a.box, b.box):
                assert abs(va - vb) <= box_tolerance, (
                    f"box mismatch beyond {box_tolerance}: {a.box} vs {b.box}"
                )
            assert abs(a.score - b.score) <= max(box_tolerance, 1e-6)
        session.shutdown()


def check_unknown_split_rejected(command: list[str], image_path: str | Path) -> None:
    """An unsupported split tag must produce the unknown_split error code and
    leave the session usable."""
    with _open(command) as session:
        try:
            session.part1(str(image_path), _PROBE_TAG, "/dev/null")
        except BackendError as exc:
            assert exc.code == "unknown_split", f"wrong error code {exc.code!r}"
        else:
            raise AssertionError("part1 accepted an unknown split tag")
        session.infer_full(str(image_path), "still_alive")
        session.shutdown()


def check_malformed_line_recovery(command: list[str], image_path: str | Path) -> None:
    """Garbage input must yield an error response, not a hang or crash."""
    with _open(command) as session:
        for line in ('this is not json', '[1,2,3]', '{"no_type":1}'):
            response = session.send_raw(line)
            assert response.get("type") == "error", f"no error for {line!r}"
        response = session.send_raw('{"type":"there_is_no_such_request"}')
        assert response.get("type") == "error"
        session.infer_full(str(image_path), "still_alive")
        session.shutdown()


def run_conformance(
    command: list[str],
    image_path: str | Path,
    split_tag: str,
    work_dir: str | Path,
    box_tolerance: float = 0.0,
) -> list[str]:
    """Run every check; returns their names, raises on the first violation."""
    check_handshake(command)
    check_infer_full(command, image_path)
    check_tensor_count(command, image_path, split_tag, work_dir)
    check_compositionality(command, image_path, split_tag, work_dir, box_tolerance)
    check_unknown_split_rejected(command, image_path)
    check_malformed_line_recovery(command, image_path)
    return [
        "handshake",
        "infer_full",
        "tensor_count",
        "compositionality",
        "unknown_split_rejected",
        "malformed_line_recovery",
    ]
