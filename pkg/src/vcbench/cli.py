"""Command line entry point.

Subcommands: run, bdrate, pack, unpack, gen-synth, report. Exit code 0 on
success, 1 for validation problems (bad config, bad input files, usage), 2
for runtime failures (codec corruption, backend crashes). Errors also go to
stderr as single-line JSON so callers can parse them.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import yaml

from .annotations import (
    GroundTruthObject,
    write_coco_annotations,
    write_track_csv,
)
from .errors import RunError, ValidationError
from .frames import mono_to_rgb, read_yuv, write_ppm, write_yuv
from .harness import _Section, parse_run_config, run
from .metrics import bd_rate, read_curve_csv
from .packing import (
    PackedFrameSet,
    deserialize_metadata,
    pack,
    serialize_metadata,
    unpack,
)
from .report import emit_report
from .synthetic import (
    DEFAULT_FRAME_RATE,
    SyntheticSceneSpec,
    generate_synthetic_dataset,
)
from .tensorfile import read_tensor_file, write_tensor_file


def _print_error(code: str, message: str) -> None:
    sys.stderr.write(json.dumps({"error": code, "message": message}) + "\n")


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on usage errors; this tool reserves 2 for runtime
    # failures, so usage problems map to 1
    def error(self, message: str):
        self.print_usage(sys.stderr)
        _print_error("usage", message)
        raise SystemExit(1)


def _build_parser() -> _Parser:
    parser = _Parser(prog="vcbench", description="compression-for-machines benchmark")
    sub = parser.add_subparsers(dest="command", metavar="command")

    p = sub.add_parser("run", parents=[], help="execute a configured run")
    p.add_argument("config", type=Path)
    p.add_argument("--workers", type=int, default=None)
    p.add_argument("--output-dir", type=Path, default=None)

    p = sub.add_parser("bdrate", help="BD-rate of a test curve against an anchor")
    p.add_argument("anchor", type=Path)
    p.add_argument("test", type=Path)

    p = sub.add_parser("pack", help="pack a tensor file into a frame + metadata")
    p.add_argument("tensorfile", type=Path)
    p.add_argument("--bit-depth", type=int, choices=(8, 10), default=10)
    p.add_argument("--out", type=Path, default=None, help="output prefix")

    p = sub.add_parser("unpack", help="rebuild a tensor file from a packed frame")
    p.add_argument("frame", type=Path, help="packed .yuv written by pack")
    p.add_argument("--metadata", type=Path, default=None, help=".fpmd sidecar path")
    p.add_argument("--split-tag", default="")
    p.add_argument("--out", type=Path, default=None)

    p = sub.add_parser("gen-synth", help="generate a synthetic dataset on disk")
    p.add_argument("spec", type=Path)

    p = sub.add_parser("report", help="plot curves and compare runs")
    p.add_argument("run_dirs", type=Path, nargs="+")
    p.add_argument("--out", type=Path, default=Path("report"))

    return parser


def _cmd_run(args) -> int:
    config = parse_run_config(args.config)
    if args.workers is not None:
        if args.workers < 1:
            raise ValidationError("workers: must be at least 1")
        config.workers = args.workers
    if args.output_dir is not None:
        config.output_dir = args.output_dir
    outcome = run(config)
    if outcome.curve is None:
        print(f"{outcome.label} accuracy={outcome.baseline_accuracy:.6g}")
    else:
        for point in outcome.curve.points:
            print(
                f"{outcome.label} qp={point.qp} rate={point.rate:.6g} "
                f"accuracy={point.accuracy:.6g}"
            )
    print(f"run directory: {outcome.run_dir}")
    return 0


def _first_curve(path: Path):
    curves = read_curve_csv(path)
    if not curves:
        raise ValidationError(f"{path}: no curves found")
    return curves[0]


def _cmd_bdrate(args) -> int:
    value = bd_rate(_first_curve(args.anchor), _first_curve(args.test))
    print(f"{value:.2f}")
    return 0


def _cmd_pack(args) -> int:
    tensor_set = read_tensor_file(args.tensorfile)
    prefix = args.out if args.out is not None else args.tensorfile.with_suffix("")
    packed = pack(tensor_set, args.bit_depth)
    frame_path = prefix.with_suffix(".yuv")
    meta_path = prefix.with_suffix(".fpmd")
    write_yuv(frame_path, [packed.frame])
    meta_path.write_bytes(serialize_metadata(packed.metadata))
    print(
        f"packed {len(tensor_set.tensors)} tensors into "
        f"{packed.frame.width}x{packed.frame.height} @ {args.bit_depth} bit"
    )
    print(f"wrote {frame_path} and {meta_path}")
    return 0


def _cmd_unpack(args) -> int:
    meta_path = args.metadata if args.metadata is not None else args.frame.with_suffix(".fpmd")
    metadata = deserialize_metadata(meta_path.read_bytes())
    frame = read_yuv(
        args.frame,
        metadata.frame_width,
        metadata.frame_height,
        metadata.bit_depth,
        "mono_400",
    )[0]
    tensor_set = unpack(PackedFrameSet(frame, metadata, args.split_tag))
    out = args.out if args.out is not None else args.frame.with_suffix(".ften")
    write_tensor_file(out, tensor_set)
    print(f"wrote {out} ({len(tensor_set.tensors)} tensors)")
    return 0


def _cmd_gen_synth(args) -> int:
    try:
        blob = yaml.safe_load(args.spec.read_text())
    except yaml.YAMLError as exc:
        raise ValidationError(f"{args.spec}: malformed YAML ({exc})") from exc
    section = _Section(blob, "gen-synth spec")
    out_dir = Path(section.take("output_dir"))
    motion = section.take("motion", None)
    if motion is not None:
        motion = tuple((float(p[0]), float(p[1])) for p in motion)
    frame_rate = float(section.take("frame_rate", DEFAULT_FRAME_RATE))
    spec = SyntheticSceneSpec(
        width=int(section.take("width", 64)),
        height=int(section.take("height", 64)),
        num_items=int(section.take("num_items", 20)),
        rects_per_item=int(section.take("rects_per_item", 3)),
        contrast=float(section.take("contrast", 0.9)),
        noise_amplitude=float(section.take("noise_amplitude", 0.02)),
        seed=int(section.take("seed", 0)),
        motion=motion,
        align=int(section.take("align", 4)),
    )
    section.finish()

    dataset = generate_synthetic_dataset(spec)
    out_dir.mkdir(parents=True, exist_ok=True)
    if spec.motion is None:
        sizes = {}
        for item in dataset.handle.items:
            write_ppm(out_dir / f"{item}.ppm", mono_to_rgb(dataset.frames[item]))
            sizes[f"{item}.ppm"] = (spec.width, spec.height)
        ground_truth = [
            GroundTruthObject(f"{g.item_id}.ppm", g.category, g.box)
            for g in dataset.handle.ground_truth
        ]
        items = [f"{item}.ppm" for item in dataset.handle.items]
        write_coco_annotations(
            out_dir / "annotations.json", items, ground_truth, sizes
        )
        manifest = {
            "kind": "image_set",
            "root": ".",
            "annotations": "annotations.json",
        }
    else:
        frames = [dataset.frames[item] for item in dataset.handle.items]
        write_yuv(out_dir / "video.yuv", frames)
        write_track_csv(out_dir / "tracks.csv", dataset.handle.ground_truth)
        manifest = {
            "kind": "video_sequence",
            "video": "video.yuv",
            "tracks": "tracks.csv",
            "width": spec.width,
            "height": spec.height,
            "bit_depth": 8,
            "chroma": "mono_400",
            "frame_rate": frame_rate,
        }
    (out_dir / "dataset.yaml").write_text(yaml.safe_dump(manifest, sort_keys=True))
    print(f"generated {len(dataset.handle.items)} items in {out_dir}")
    print(f"dataset digest: {dataset.digest()}")
    return 0


def _cmd_report(args) -> int:
    curves = []
    for run_dir in args.run_dirs:
        csv_path = run_dir / "curves.csv"
        if not csv_path.exists():
            raise ValidationError(f"{run_dir}: no curves.csv (was this a local run?)")
        curves.extend(read_curve_csv(csv_path))
    anchor = curves[0] if len(curves) > 1 else None
    paths = emit_report(curves, args.out, anchor=anchor, title="rate-accuracy")
    for name in sorted(paths):
        print(f"wrote {paths[name]}")
    return 0


_COMMANDS = {
    "run": _cmd_run,
    "bdrate": _cmd_bdrate,
    "pack": _cmd_pack,
    "unpack": _cmd_unpack,
    "gen-synth": _cmd_gen_synth,
    "report": _cmd_report,
}


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    if args.command is None:
        parser.print_usage(sys.stderr)
        _print_error("usage", "a subcommand is required")
        return 1
    try:
        return _COMMANDS[args.command](args)
    except ValidationError as exc:
        _print_error("validation", str(exc))
        return 1
    except RunError as exc:
        _print_error("runtime", str(exc))
        return 2
    except OSError as exc:
        _print_error("io", str(exc))
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
