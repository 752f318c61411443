"""Sweep the reference codec over its quantizer ladder on one synthetic
frame and watch rate fall as distortion grows, bounded by ceil(step/2)."""

import numpy as np

from vcbench import (
    CodecParams,
    SyntheticSceneSpec,
    decode,
    distortion_bound,
    encode_reference,
    generate_synthetic_dataset,
    qp_to_step,
)

dataset = generate_synthetic_dataset(
    SyntheticSceneSpec(
        width=64, height=64, num_items=1, rects_per_item=3,
        noise_amplitude=0.05, seed=4,
    )
)
frame = dataset.frames[dataset.handle.items[0]]
pixels = frame.width * frame.height

print(f"input: {frame.width}x{frame.height} mono, {frame.bit_depth} bit")
print(f"{'qp':>4} {'step':>8} {'bound':>6} {'bytes':>7} {'bpp':>7} {'max err':>8}")
for qp in (4, 10, 16, 22, 28, 34, 40):
    stream = encode_reference([frame], CodecParams(qp))
    recon = decode(stream)[0]
    err = int(np.abs(recon.planes[0].astype(int) - frame.planes[0].astype(int)).max())
    assert err <= distortion_bound(qp)
    print(
        f"{qp:>4} {qp_to_step(qp):>8.3f} {distortion_bound(qp):>6} "
        f"{len(stream):>7} {8 * len(stream) / pixels:>7.3f} {err:>8}"
    )

print()
print("video: repeated frames cost almost nothing after the first")
frames = [frame] * 5
intra = encode_reference(frames, CodecParams(22, "all_intra"))
delta = encode_reference(frames, CodecParams(22, "low_delay", intra_period=5))
print(f"  all_intra: {len(intra)} bytes for {len(frames)} frames")
print(f"  low_delay: {len(delta)} bytes for {len(frames)} frames")
