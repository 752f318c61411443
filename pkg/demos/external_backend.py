"""Talk to a model server over the line-delimited JSON protocol, then run
the conformance checks any external backend has to pass."""

from pathlib import Path

from vcbench import SyntheticSceneSpec, generate_synthetic_dataset, mono_to_rgb, write_ppm
from vcbench.backends import BackendSession, builtin_serve_command
from vcbench.conformance import run_conformance

OUT = Path("demo_out/backend")
OUT.mkdir(parents=True, exist_ok=True)

dataset = generate_synthetic_dataset(
    SyntheticSceneSpec(width=64, height=64, num_items=1, rects_per_item=3, seed=2)
)
scene = OUT / "scene.ppm"
write_ppm(scene, mono_to_rgb(dataset.frames[dataset.handle.items[0]]))

# the built-in detector served as a child process; any command that
# speaks the protocol on stdin/stdout plugs in the same way
command = builtin_serve_command("synthetic")
print("serving:", " ".join(command))

with BackendSession(command) as session:
    caps = session.hello()
    print(f"tasks: {caps.tasks}")
    for s in caps.split_tags:
        print(f"split: model={s.model_name!r} tag={s.tag!r} tensors={s.tensor_count}")

    detections = session.infer_full(str(scene), "scene")
    print(f"{len(detections)} detections:")
    for d in detections:
        print(f"  {d.category} score={d.score:.3f} box={tuple(round(v, 1) for v in d.box)}")

checks = run_conformance(command, scene, "s1", OUT)
print("conformance checks passed:")
for name in checks:
    print(f"  {name}")
