"""Token index coding and the byte-compressor baseline it competes against.

Wire layout of the text section (little-endian):

    [u8 mode][u16 token_count][payload, byte-padded]

Fixed mode packs each index into ceil(log2 |V|) bits, big-endian within the
bit stream. Entropy mode range-codes indices against a static unigram model
derived from the vocabulary alone (Zipf-by-rank mass over word tokens, a
light uniform floor over byte-fallback tokens), so both sides reconstruct
the same table without transmitting it.

The baseline is a DEFLATE byte compressor behind a one-byte version header:
exactly the class of general-purpose coder that index coding is meant to
beat on caption-sized strings.
"""

from __future__ import annotations

import math
import struct
import zlib

import numpy as np

from ..codec.entropy import _quantize_freqs
from ..codec.rc import decode as _rc_decode, encode as _rc_encode
from ..errors import DecodeError, InvalidRangeError
from .tokenizer import BYTE_TOKENS, TokenSequence, Vocabulary, _check_tokens

MODE_FIXED = 0
MODE_ENTROPY = 1
_BASELINE_VERSION = 1

# Unigram prior: byte-fallback tokens share this fraction of the mass.
_BYTE_MASS = 0.05
_ZIPF_SHIFT = 10.0

_HEADER = struct.Struct("<BH")


def fixed_bits_per_token(vocab: Vocabulary) -> int:
    return max(1, math.ceil(math.log2(vocab.size)))


def _unigram_cum(vocab: Vocabulary) -> np.ndarray:
    n_words = vocab.size - BYTE_TOKENS
    probs = np.empty(vocab.size, dtype=np.float64)
    probs[:BYTE_TOKENS] = _BYTE_MASS / BYTE_TOKENS
    if n_words:
        zipf = 1.0 / (np.arange(n_words) + _ZIPF_SHIFT)
        probs[BYTE_TOKENS:] = (1.0 - _BYTE_MASS) * zipf / zipf.sum()
    else:
        probs[:BYTE_TOKENS] += (1.0 - _BYTE_MASS) / BYTE_TOKENS
    freqs = _quantize_freqs(probs / probs.sum())
    cum = np.zeros(freqs.size + 1, dtype=np.uint32)
    np.cumsum(freqs, out=cum[1:], dtype=np.uint32)
    return cum


def _pack_bits(values: list[int], width: int) -> bytes:
    acc = 0
    nbits = 0
    out = bytearray()
    for v in values:
        acc = (acc << width) | v
        nbits += width
        while nbits >= 8:
            nbits -= 8
            out.append((acc >> nbits) & 0xFF)
    if nbits:
        out.append((acc << (8 - nbits)) & 0xFF)
    return bytes(out)


def _unpack_bits(data: bytes, width: int, count: int) -> list[int]:
    need = (width * count + 7) // 8
    if len(data) < need:
        raise DecodeError(f"fixed-mode payload holds {len(data)} bytes, needs {need}")
    acc = 0
    nbits = 0
    out = []
    it = iter(data)
    for _ in range(count):
        while nbits < width:
            acc = (acc << 8) | next(it)
            nbits += 8
        nbits -= width
        out.append((acc >> nbits) & ((1 << width) - 1))
        acc &= (1 << nbits) - 1
    return out


def encode_indices(
    tokens: TokenSequence, vocab: Vocabulary, mode: str = "fixed"
) -> bytes:
    """Serialize token indices; round trips exactly against the same vocabulary."""
    _check_tokens(tokens, vocab)
    if len(tokens) > 0xFFFF:
        raise InvalidRangeError(f"token count {len(tokens)} exceeds the u16 header")
    if mode == "fixed":
        payload = _pack_bits(tokens, fixed_bits_per_token(vocab))
        mode_id = MODE_FIXED
    elif mode == "entropy":
        idx = np.asarray(tokens, dtype=np.uint32)
        payload = _rc_encode(idx, _unigram_cum(vocab)) if len(tokens) else b""
        mode_id = MODE_ENTROPY
    else:
        raise InvalidRangeError(f"unknown index-coding mode {mode!r}")
    return _HEADER.pack(mode_id, len(tokens)) + payload


def decode_indices(b: bytes, vocab: Vocabulary) -> TokenSequence:
    """Invert encode_indices; malformed streams raise a decode error."""
    if len(b) < _HEADER.size:
        raise DecodeError("text section shorter than its header")
    mode_id, count = _HEADER.unpack_from(b)
    payload = b[_HEADER.size:]
    if mode_id == MODE_FIXED:
        tokens = _unpack_bits(payload, fixed_bits_per_token(vocab), count)
    elif mode_id == MODE_ENTROPY:
        tokens = list(map(int, _rc_decode(payload, count, _unigram_cum(vocab))))
    else:
        raise DecodeError(f"unknown index-coding mode id {mode_id}")
    _check_tokens(tokens, vocab)
    return tokens


def text_payload_bits(section: bytes) -> int:
    """Bits carried by the payload part of a text section (header excluded)."""
    if len(section) < _HEADER.size:
        raise DecodeError("text section shorter than its header")
    return 8 * (len(section) - _HEADER.size)


def baseline_compress(text: str) -> bytes:
    """General-purpose dictionary+entropy byte compressor (DEFLATE)."""
    return bytes([_BASELINE_VERSION]) + zlib.compress(text.encode("utf-8"), 9)


def baseline_decompress(b: bytes) -> str:
    if not b or b[0] != _BASELINE_VERSION:
        raise DecodeError("unknown baseline container version")
    try:
        return zlib.decompress(b[1:]).decode("utf-8")
    except zlib.error as exc:
        raise DecodeError(f"corrupt baseline stream: {exc}") from exc
