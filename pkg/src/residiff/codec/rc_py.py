"""Pure-Python range coder core (fallback twin of the compiled kernel).

Carry-propagating byte-oriented range coder (the scheme used by LZMA-family
codecs): 32-bit range, 33-bit low with explicit carry resolution through a
byte cache, 16-bit frequency precision. Cumulative tables must end at exactly
65536. Both backends emit byte-identical streams; the parity test in the
suite enforces this.

Symbols are alphabet indices. The caller frames the stream (symbol count,
model parameters, checksum); this module only maps indices to bytes.
"""

from __future__ import annotations

from bisect import bisect_right

TOTAL_BITS = 16
TOTAL = 1 << TOTAL_BITS
_RANGE_TOP = 1 << 24
_MASK32 = 0xFFFFFFFF

BACKEND = "python"


def encode_block(indices, cum) -> bytes:
    """Range-encode alphabet indices against a cumulative frequency table."""
    cum = list(map(int, cum))
    if cum[-1] != TOTAL:
        raise ValueError(f"cumulative table must end at {TOTAL}, got {cum[-1]}")
    out = bytearray()
    low = 0
    rng = _MASK32
    cache = 0
    pending = 1  # covers the leading dummy byte the decoder discards

    def shift_low():
        nonlocal low, cache, pending
        if low < 0xFF000000 or low > _MASK32:
            carry = low >> 32
            out.append((cache + carry) & 0xFF)
            for _ in range(pending - 1):
                out.append((0xFF + carry) & 0xFF)
            pending = 0
            cache = (low >> 24) & 0xFF
        pending += 1
        low = (low << 8) & _MASK32

    for idx in indices:
        r = rng >> TOTAL_BITS
        low += cum[idx] * r
        rng = (cum[idx + 1] - cum[idx]) * r
        while rng < _RANGE_TOP:
            rng <<= 8
            shift_low()
    for _ in range(5):
        shift_low()
    return bytes(out)


def decode_block(data: bytes, count: int, cum) -> list[int]:
    """Decode ``count`` alphabet indices; bytes past the end read as zero."""
    cum = list(map(int, cum))
    if cum[-1] != TOTAL:
        raise ValueError(f"cumulative table must end at {TOTAL}, got {cum[-1]}")
    pos = 1  # skip the encoder's leading dummy byte
    n_data = len(data)
    code = 0
    for _ in range(4):
        code = (code << 8) | (data[pos] if pos < n_data else 0)
        pos += 1
    rng = _MASK32

    out = []
    for _ in range(count):
        r = rng >> TOTAL_BITS
        val = code // r
        if val >= TOTAL:
            val = TOTAL - 1
        idx = bisect_right(cum, val) - 1
        code -= cum[idx] * r
        rng = (cum[idx + 1] - cum[idx]) * r
        out.append(idx)
        while rng < _RANGE_TOP:
            code = ((code << 8) | (data[pos] if pos < n_data else 0)) & _MASK32
            pos += 1
            rng <<= 8
    return out
