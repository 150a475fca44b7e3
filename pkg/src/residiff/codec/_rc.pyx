# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled range coder core (hot kernel twin of rc_py).

Carry-propagating byte-oriented range coder with 32-bit range, 33-bit low,
and 16-bit frequency precision; emits byte-identical streams to the
pure-Python fallback.
"""

from cpython.bytes cimport PyBytes_FromStringAndSize
from libc.stdlib cimport free, malloc

ctypedef unsigned long long u64

cdef enum:
    TOTAL_BITS = 16

cdef u64 TOTAL_C = 1ULL << 16
cdef u64 RANGE_TOP = 1ULL << 24
cdef u64 MASK32 = 0xFFFFFFFFULL

TOTAL = 1 << 16
BACKEND = "compiled"


def encode_block(unsigned int[::1] indices, unsigned int[::1] cum):
    """Range-encode alphabet indices against a cumulative frequency table."""
    cdef Py_ssize_t n = indices.shape[0]
    cdef Py_ssize_t k = cum.shape[0]
    if cum[k - 1] != TOTAL_C:
        raise ValueError(f"cumulative table must end at {TOTAL}, got {cum[k - 1]}")
    # <= 3 bytes per symbol worst case plus flush; assertion below backstops.
    cdef Py_ssize_t cap = 3 * n + 16
    cdef unsigned char* out = <unsigned char*> malloc(cap)
    if out == NULL:
        raise MemoryError()
    cdef Py_ssize_t pos = 0
    cdef u64 low = 0, rng = MASK32, r, carry
    cdef unsigned int cache = 0
    cdef Py_ssize_t pending = 1
    cdef unsigned int idx
    cdef Py_ssize_t i, j
    try:
        for i in range(n):
            idx = indices[i]
            r = rng >> TOTAL_BITS
            low += cum[idx] * r
            rng = (cum[idx + 1] - cum[idx]) * r
            while rng < RANGE_TOP:
                rng = rng << 8
                # shift_low
                if low < 0xFF000000ULL or low > MASK32:
                    carry = low >> 32
                    if pos + pending >= cap:
                        raise AssertionError("range coder output overran its bound")
                    out[pos] = <unsigned char> ((cache + carry) & 0xFF)
                    pos += 1
                    for j in range(pending - 1):
                        out[pos] = <unsigned char> ((0xFF + carry) & 0xFF)
                        pos += 1
                    pending = 0
                    cache = <unsigned int> ((low >> 24) & 0xFF)
                pending += 1
                low = (low << 8) & MASK32
        for i in range(5):
            if low < 0xFF000000ULL or low > MASK32:
                carry = low >> 32
                if pos + pending >= cap:
                    raise AssertionError("range coder output overran its bound")
                out[pos] = <unsigned char> ((cache + carry) & 0xFF)
                pos += 1
                for j in range(pending - 1):
                    out[pos] = <unsigned char> ((0xFF + carry) & 0xFF)
                    pos += 1
                pending = 0
                cache = <unsigned int> ((low >> 24) & 0xFF)
            pending += 1
            low = (low << 8) & MASK32
        return PyBytes_FromStringAndSize(<char*> out, pos)
    finally:
        free(out)


def decode_block(const unsigned char[::1] data, Py_ssize_t count,
                 unsigned int[::1] cum, unsigned int[::1] out):
    """Decode ``count`` indices into ``out``; bytes past the end read as zero."""
    cdef Py_ssize_t k = cum.shape[0]
    if cum[k - 1] != TOTAL_C:
        raise ValueError(f"cumulative table must end at {TOTAL}, got {cum[k - 1]}")
    if out.shape[0] < count:
        raise ValueError("output buffer too small")
    cdef Py_ssize_t n_data = data.shape[0]
    cdef Py_ssize_t pos = 1  # skip the encoder's leading dummy byte
    cdef u64 code = 0, rng = MASK32, r, val
    cdef Py_ssize_t i, lo, hi, mid
    for i in range(4):
        code = (code << 8) | (data[pos] if pos < n_data else 0)
        pos += 1
    for i in range(count):
        r = rng >> TOTAL_BITS
        val = code // r
        if val >= TOTAL_C:
            val = TOTAL_C - 1
        # rightmost bin with cum[lo] <= val
        lo = 0
        hi = k - 1
        while hi - lo > 1:
            mid = (lo + hi) >> 1
            if cum[mid] <= val:
                lo = mid
            else:
                hi = mid
        code -= cum[lo] * r
        rng = (cum[lo + 1] - cum[lo]) * r
        out[i] = <unsigned int> lo
        while rng < RANGE_TOP:
            code = ((code << 8) | (data[pos] if pos < n_data else 0)) & MASK32
            pos += 1
            rng = rng << 8
    return count
