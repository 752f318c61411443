"""Generator must match the published splitmix64 vectors bit for bit."""

import pytest
from hypothesis import given, strategies as st

from vcbench import SplitMix64

# Reference outputs of the canonical C implementation for seed 0 and a
# nonzero seed. Any deviation breaks cross-language reproducibility of
# every synthetic dataset, so these are frozen.
SEED0_VECTORS = [
    0xE220A8397B1DCDAF,
    0x6E789E6AA1B965F4,
    0x06C45D188009454F,
    0xF88BB8A8724C81EC,
    0x1B39896A51A8749B,
]
SEED1234567_VECTORS = [
    6457827717110365317,
    3203168211198807973,
    9817491932198370423,
]


def test_seed0_reference_vectors():
    rng = SplitMix64(0)
    assert [rng.next_u64() for _ in range(5)] == SEED0_VECTORS


def test_nonzero_seed_reference_vectors():
    rng = SplitMix64(1234567)
    assert [rng.next_u64() for _ in range(3)] == SEED1234567_VECTORS


def test_same_seed_same_stream():
    a = SplitMix64(99)
    b = SplitMix64(99)
    assert [a.next_u64() for _ in range(100)] == [b.next_u64() for _ in range(100)]


@given(st.integers(min_value=0, max_value=2**64 - 1))
def test_outputs_are_u64(seed):
    rng = SplitMix64(seed)
    for _ in range(4):
        v = rng.next_u64()
        assert 0 <= v < 2**64


@given(st.integers(min_value=0, max_value=2**64 - 1))
def test_floats_in_unit_interval(seed):
    rng = SplitMix64(seed)
    for _ in range(8):
        f = rng.next_float()
        assert 0.0 <= f < 1.0


def test_block_matches_sequential_draws():
    a = SplitMix64(42)
    seq = [a.next_float() for _ in range(32)]
    b = SplitMix64(42)
    assert list(b.next_float_block(32)) == seq


@given(st.integers(min_value=0, max_value=2**32), st.integers(min_value=1, max_value=1000))
def test_next_index_in_range(seed, n):
    rng = SplitMix64(seed)
    for _ in range(4):
        assert 0 <= rng.next_index(n) < n


def test_distinct_seeds_diverge():
    streams = set()
    for seed in range(20):
        rng = SplitMix64(seed)
        streams.add(tuple(rng.next_u64() for _ in range(4)))
    assert len(streams) == 20
