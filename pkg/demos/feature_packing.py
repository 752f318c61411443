"""Split a model at its feature output, pack the tensors into one video
frame, squeeze that frame through the codec, and finish inference on the
other side. The whole trip is what the split pipeline does per item."""

import numpy as np

from vcbench import (
    CodecParams,
    SyntheticSceneSpec,
    decode,
    encode_reference,
    generate_synthetic_dataset,
    pack,
    unpack,
)
from vcbench.backends import SyntheticBackend
from vcbench.packing import PackedFrameSet

backend = SyntheticBackend()
dataset = generate_synthetic_dataset(
    SyntheticSceneSpec(width=64, height=64, num_items=1, rects_per_item=3, seed=11)
)
item = dataset.handle.items[0]
frame = dataset.frames[item]

full = backend.infer_full(frame, item)
print(f"full inference: {len(full)} detections")

tensors = backend.part1(frame)
print(f"split produces {len(tensors.tensors)} tensors:")
for t in tensors.tensors:
    print(f"  {t.shape}")

packed = pack(tensors, bit_depth=10)
print(f"packed into one {packed.frame.width}x{packed.frame.height} plane @ 10 bit")
for layout in packed.metadata.layouts:
    rows, cols = layout.grid_shape
    print(f"  rows {layout.y_offset}..{layout.y_offset + rows}: "
          f"{layout.grid_rows}x{layout.grid_cols} grid of "
          f"{layout.height}x{layout.width} channels")

stream = encode_reference([packed.frame], CodecParams(16))
recon = decode(stream)[0]
print(f"codec: {len(stream)} bytes at qp 16")

back = unpack(PackedFrameSet(recon, packed.metadata, packed.split_tag))
worst = max(
    float(np.abs(a.values - b.values).max())
    for a, b in zip(tensors.tensors, back.tensors)
)
print(f"worst feature error after the trip: {worst:.5f}")

resumed = backend.part2(back, frame.width, frame.height, item)
print(f"resumed inference: {len(resumed)} detections")
for a, b in zip(full, resumed):
    print(f"  full {tuple(round(v, 1) for v in a.box)} "
          f"vs split {tuple(round(v, 1) for v in b.box)}")
