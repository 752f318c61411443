"""Bit packing and order-0 exponential-Golomb coding.

Code words: value m >= 0 is written as (bitlength(m+1) - 1) zeros followed by
the binary digits of m+1, so m = 0 -> "1", 1 -> "010", 2 -> "011",
3 -> "00100". Encoding and decoding are array-based so whole planes move
through without per-sample Python overhead.
"""

from __future__ import annotations

import numpy as np

from .errors import CorruptionError

MAX_LEADING_ZEROS = 31


def signed_to_unsigned(q: np.ndarray) -> np.ndarray:
    """Map signed levels to the non-negative code domain: q>0 -> 2q-1, else -2q."""
    q = q.astype(np.int64)
    return np.where(q > 0, 2 * q - 1, -2 * q).astype(np.uint64)


def unsigned_to_signed(m: np.ndarray) -> np.ndarray:
    m = m.astype(np.int64)
    return np.where(m & 1, (m + 1) >> 1, -(m >> 1))


def expgolomb_encode(m: np.ndarray) -> np.ndarray:
    """Encode non-negative values to a flat 0/1 bit array."""
    v = m.astype(np.uint64) + 1
    # frexp exponent is exact floor(log2(v)) + 1 for v < 2^53
    value_bits = np.frexp(v.astype(np.float64))[1].astype(np.int64)
    code_len = 2 * value_bits - 1
    offsets = np.zeros(len(v) + 1, dtype=np.int64)
    np.cumsum(code_len, out=offsets[1:])
    bits = np.zeros(offsets[-1], dtype=np.uint8)
    starts = offsets[:-1] + (value_bits - 1)  # value digits begin after the zeros
    for t in range(int(value_bits.max()) if len(v) else 0):
        sel = value_bits > t
        shift = (value_bits[sel] - 1 - t).astype(np.uint64)
        bits[starts[sel] + t] = ((v[sel] >> shift) & np.uint64(1)).astype(np.uint8)
    return bits


def expgolomb_decode(bits: np.ndarray, count: int) -> np.ndarray:
    """Decode exactly count values from a flat bit array.

    Raises CorruptionError when a code word starts with more than 31 zeros or
    the bit array ends mid-word.
    """
    one_positions = np.flatnonzero(bits)
    out = np.empty(count, dtype=np.uint64)
    pos = 0
    cursor = 0  # index into one_positions of the next unused 1-bit
    n_ones = len(one_positions)
    weights = 1 << np.arange(63, -1, -1, dtype=np.uint64)
    for i in range(count):
        if cursor >= n_ones:
            raise CorruptionError("bitstream exhausted inside a code word")
        first_one = int(one_positions[cursor])
        zeros = first_one - pos
        if zeros > MAX_LEADING_ZEROS:
            raise CorruptionError(
                f"code word with {zeros} leading zeros (limit {MAX_LEADING_ZEROS})"
            )
        end = first_one + zeros + 1
        if end > len(bits):
            raise CorruptionError("bitstream exhausted inside a code word")
        value_bits = bits[first_one:end]
        v = int(value_bits.astype(np.uint64) @ weights[64 - len(value_bits):])
        out[i] = v - 1
        pos = end
        cursor = int(np.searchsorted(one_positions, pos))
    return out


def pack_bits(bits: np.ndarray) -> bytes:
    """Pad a 0/1 array to a whole byte count and pack it MSB-first."""
    return np.packbits(bits).tobytes()


def unpack_bits(payload: bytes) -> np.ndarray:
    return np.unpackbits(np.frombuffer(payload, dtype=np.uint8))


def pack_values(values: np.ndarray, bits_per_value: int) -> bytes:
    """Pack fixed-width big-endian-within-byte sample values."""
    v = values.astype(np.uint64).ravel()
    bits = np.empty((len(v), bits_per_value), dtype=np.uint8)
    for t in range(bits_per_value):
        bits[:, t] = (v >> np.uint64(bits_per_value - 1 - t)) & np.uint64(1)
    return pack_bits(bits.ravel())


def unpack_values(payload: bytes, bits_per_value: int, count: int) -> np.ndarray:
    bits = unpack_bits(payload)
    need = bits_per_value * count
    if len(bits) < need:
        raise CorruptionError(
            f"payload holds {len(bits)} bits, needed {need} for {count} samples"
        )
    mat = bits[:need].reshape(count, bits_per_value).astype(np.uint64)
    weights = 1 << np.arange(bits_per_value - 1, -1, -1, dtype=np.uint64)
    return mat @ weights
