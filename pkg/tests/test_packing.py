"""Tensor quantization, channel tiling, and the metadata sidecar.

The roundtrip bound s/2 comes from the quantizer definition: a uniform
mid-rise step of s can displace a value by at most half a step.
"""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from vcbench import (
    FeatureTensor,
    FeatureTensorSet,
    PackedFrameSet,
    deserialize_metadata,
    pack,
    serialize_metadata,
    unpack,
)
from vcbench.errors import CorruptionError, FormatError, ValidationError
from vcbench.packing import grid_geometry, quantize_set, tile_channels, zero_code


def tensor_set(arrays, tag="t"):
    return FeatureTensorSet(tag, [FeatureTensor(np.asarray(a, np.float32)) for a in arrays])


def fpn_like_set(seed=0):
    rng = np.random.default_rng(seed)
    shapes = [(2, 16, 16), (2, 8, 8), (2, 4, 4), (2, 2, 2)]
    return tensor_set([rng.normal(size=s) for s in shapes], tag="s1")


class TestQuantize:
    def test_range_endpoints_hit_code_extremes(self):
        ts = tensor_set([[[[-1.0, 1.0]]]])
        codes, lo, hi, scale = quantize_set(ts.tensors, 10)
        assert (lo, hi) == (-1.0, 1.0)
        assert codes[0].min() == 0 and codes[0].max() == 1023

    def test_constant_tensor_degenerates_cleanly(self):
        ts = tensor_set([np.full((2, 3, 4), 3.7)])
        codes, lo, hi, scale = quantize_set(ts.tensors, 10)
        assert scale == 1.0
        assert codes[0].max() == 0
        back = unpack(pack(ts, 10))
        assert np.allclose(back.tensors[0].values, np.float32(3.7))

    def test_joint_scale_across_tensors(self):
        # the global extremes live in different tensors; both must see one scale
        ts = tensor_set([np.full((1, 1, 1), -5.0), np.full((1, 1, 1), 5.0)])
        codes, lo, hi, _ = quantize_set(ts.tensors, 8)
        assert (lo, hi) == (-5.0, 5.0)
        assert codes[0][0, 0, 0] == 0
        assert codes[1][0, 0, 0] == 255

    def test_non_finite_named_by_tensor_index(self):
        bad = np.zeros((1, 2, 2), np.float32)
        bad[0, 0, 0] = np.nan
        ts = tensor_set([np.zeros((1, 2, 2)), bad])
        with pytest.raises(ValidationError, match="tensor 1"):
            quantize_set(ts.tensors, 10)

    def test_bad_bit_depth(self):
        with pytest.raises(ValidationError, match="bit_depth"):
            quantize_set(tensor_set([np.zeros((1, 1, 1))]).tensors, 12)

    def test_roundtrip_error_within_half_step(self):
        rng = np.random.default_rng(17)
        ts = tensor_set([rng.normal(size=(3, 5, 7)) * 10.0])
        packed = pack(ts, 10)
        s = packed.metadata.scale
        back = unpack(packed)
        err = np.abs(back.tensors[0].values - ts.tensors[0].values).max()
        assert err <= s / 2 + 1e-9


class TestTiling:
    def test_grid_geometry(self):
        assert grid_geometry(1) == (1, 1)
        assert grid_geometry(4) == (2, 2)
        assert grid_geometry(6) == (3, 2)
        assert grid_geometry(5) == (3, 2)

    def test_single_channel_is_identity(self):
        codes = np.arange(6, dtype=np.uint16).reshape(1, 2, 3)
        grid = tile_channels(codes, pad_value=0)
        assert (grid == codes[0]).all()

    def test_four_channels_two_by_two(self):
        codes = np.stack([np.full((2, 3), k, np.uint16) for k in range(4)])
        grid = tile_channels(codes, pad_value=99)
        assert grid.shape == (4, 6)
        # raster order: channel 2 starts the second grid row
        assert grid[2, 0] == 2
        assert grid[0, 3] == 1
        assert grid[2, 3] == 3

    def test_unused_cell_gets_pad_value(self):
        codes = np.stack([np.full((2, 2), k, np.uint16) for k in range(3)])
        grid = tile_channels(codes, pad_value=77)
        assert grid.shape == (4, 4)
        assert (grid[2:4, 2:4] == 77).all()

    def test_zero_code_is_code_of_real_zero(self):
        # range [-4, 4] at 8 bits: zero sits mid-range
        assert zero_code(-4.0, 8.0 / 255.0, 8) == 128
        assert zero_code(0.0, 1.0 / 255.0, 8) == 0
        # zero outside the value range clips to the code range
        assert zero_code(5.0, 1.0 / 255.0, 8) == 0


class TestPack:
    def test_fpn_shaped_fixture_geometry(self):
        packed = pack(fpn_like_set(), 10)
        # widths 32,16,8,4 (two channels tile side by side), heights 16,8,4,2
        assert packed.frame.width == 32
        assert packed.frame.height == 30
        assert [l.y_offset for l in packed.metadata.layouts] == [0, 16, 24, 28]
        assert packed.frame.chroma == "mono_400"

    def test_single_tensor_frame_equals_tile_grid(self):
        rng = np.random.default_rng(1)
        ts = tensor_set([rng.normal(size=(4, 3, 3))])
        packed = pack(ts, 8)
        codes, _, _, _ = quantize_set(ts.tensors, 8)
        lo = packed.metadata.global_min
        grid = tile_channels(codes[0], zero_code(lo, packed.metadata.scale, 8))
        assert (packed.frame.planes[0] == grid).all()

    def test_narrow_grid_right_padded_with_zero_code(self):
        ts = fpn_like_set()
        packed = pack(ts, 10)
        pad = zero_code(packed.metadata.global_min, packed.metadata.scale, 10)
        # second tensor grid is 16 wide inside a 32-wide frame
        assert (packed.frame.planes[0][16:24, 16:] == pad).all()

    def test_frame_height_accounts_for_every_grid(self):
        packed = pack(fpn_like_set(), 10)
        total = sum(l.grid_shape[0] for l in packed.metadata.layouts)
        assert packed.frame.height == total == packed.metadata.frame_height

    def test_split_tag_rides_along(self):
        packed = pack(fpn_like_set(), 10)
        assert packed.split_tag == "s1"
        assert unpack(packed).split_tag == "s1"


class TestUnpack:
    def test_shapes_survive_exactly(self):
        ts = fpn_like_set()
        back = unpack(pack(ts, 10))
        assert [t.shape for t in back.tensors] == [t.shape for t in ts.tensors]

    def test_roundtrip_bound_over_fpn_fixture(self):
        ts = fpn_like_set(seed=3)
        packed = pack(ts, 10)
        s = packed.metadata.scale
        back = unpack(packed)
        for a, b in zip(ts.tensors, back.tensors):
            assert np.abs(a.values - b.values).max() <= s / 2 + 1e-9

    def test_sentinel_bijection(self):
        # one distinct code per channel must come back in the same channel
        shapes = [(5, 3, 4), (7, 2, 2), (1, 6, 6)]
        arrays = []
        sentinel = iter(range(1, 100))
        for c, h, w in shapes:
            a = np.zeros((c, h, w), np.float32)
            for k in range(c):
                a[k, k % h, k % w] = float(next(sentinel))
            arrays.append(a)
        ts = tensor_set(arrays)
        packed = pack(ts, 10)
        back = unpack(packed)
        s = packed.metadata.scale
        for orig, rec in zip(ts.tensors, back.tensors):
            assert np.abs(orig.values - rec.values).max() <= s / 2 + 1e-9
            # the per-channel maxima keep their channel index
            assert (
                np.argmax(rec.values.reshape(rec.values.shape[0], -1), axis=1)
                == np.argmax(orig.values.reshape(orig.values.shape[0], -1), axis=1)
            ).all()

    def test_height_mismatch_is_corruption(self):
        packed = pack(fpn_like_set(), 10)
        clipped = PackedFrameSet(
            frame=_drop_last_row(packed.frame),
            metadata=packed.metadata,
            split_tag=packed.split_tag,
        )
        with pytest.raises(CorruptionError, match="30"):
            unpack(clipped)

    def test_bit_depth_mismatch_is_corruption(self):
        packed = pack(fpn_like_set(), 8)
        packed.metadata.bit_depth = 10
        with pytest.raises(CorruptionError, match="bit_depth"):
            unpack(packed)

    def test_ten_bit_never_worse_than_eight(self):
        rng = np.random.default_rng(23)
        for _ in range(10):
            ts = tensor_set([rng.normal(size=(3, 4, 4)) * rng.uniform(0.1, 20)])
            e8 = np.abs(
                unpack(pack(ts, 8)).tensors[0].values - ts.tensors[0].values
            ).max()
            e10 = np.abs(
                unpack(pack(ts, 10)).tensors[0].values - ts.tensors[0].values
            ).max()
            assert e10 <= e8 + 1e-9


def _drop_last_row(frame):
    import vcbench

    plane = frame.planes[0][:-1].copy()
    return vcbench.mono_frame(plane, bit_depth=frame.bit_depth)


class TestSidecar:
    def test_roundtrip_exact_for_f32_sources(self):
        packed = pack(fpn_like_set(), 10)
        blob = serialize_metadata(packed.metadata)
        meta = deserialize_metadata(blob)
        assert meta.bit_depth == packed.metadata.bit_depth
        assert meta.layouts == packed.metadata.layouts
        # extremes of float32 tensors are exactly representable in the sidecar
        assert meta.global_min == packed.metadata.global_min
        assert meta.global_max == packed.metadata.global_max
        assert (meta.frame_width, meta.frame_height) == (
            packed.metadata.frame_width,
            packed.metadata.frame_height,
        )

    def test_magic_checked(self):
        blob = serialize_metadata(pack(fpn_like_set(), 10).metadata)
        with pytest.raises(FormatError, match="metadata"):
            deserialize_metadata(b"XXXX" + blob[4:])

    def test_truncation_detected(self):
        blob = serialize_metadata(pack(fpn_like_set(), 10).metadata)
        with pytest.raises(FormatError, match="truncated"):
            deserialize_metadata(blob[:-3])

    def test_unpack_through_sidecar_matches_direct(self):
        ts = fpn_like_set(seed=9)
        packed = pack(ts, 10)
        meta = deserialize_metadata(serialize_metadata(packed.metadata))
        via = unpack(PackedFrameSet(packed.frame, meta, packed.split_tag))
        direct = unpack(packed)
        for a, b in zip(via.tensors, direct.tensors):
            assert (a.values == b.values).all()


@settings(max_examples=30, deadline=None)
@given(
    st.lists(
        st.tuples(
            st.integers(min_value=1, max_value=6),
            st.integers(min_value=1, max_value=6),
            st.integers(min_value=1, max_value=6),
        ),
        min_size=1,
        max_size=3,
    ),
    st.integers(min_value=0, max_value=2**31),
    st.sampled_from([8, 10]),
)
def test_roundtrip_property(shapes, seed, bit_depth):
    rng = np.random.default_rng(seed)
    ts = tensor_set([rng.normal(size=s) * rng.uniform(0.01, 100) for s in shapes])
    packed = pack(ts, bit_depth)
    back = unpack(packed)
    s = packed.metadata.scale
    assert [t.shape for t in back.tensors] == [t.shape for t in ts.tensors]
    for a, b in zip(ts.tensors, back.tensors):
        assert np.abs(a.values - b.values).max() <= s / 2 + 1e-9
