"""Stand-in latent feature codec: uniform quantizer, entropy model, coder.

Rate control is the quantization bin width. The wire section layout is

    [u32 symbol_count][u8 model_kind][model params f64...][u32 crc32]
    [u32 coded_byte_count][range-coded bytes][u32 escape_count][i16 escapes]

little-endian throughout. The checksum covers every section byte except the
checksum field itself, so any single-bit corruption is detected. Escaped
symbols (outside a parametric model's window) travel as raw 16-bit values in
submission order after the coded block.
"""

from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass

import numpy as np

from ..errors import ChecksumError, DecodeError, InvalidRangeError, ShapeMismatchError
from .entropy import (
    KIND_FROM_ID,
    KIND_IDS,
    SYMBOL_MAX,
    SYMBOL_MIN,
    EntropyModel,
)
from .rc import BACKEND, decode as _rc_decode, encode as _rc_encode

__all__ = [
    "BACKEND",
    "EntropyModel",
    "QuantizedLatent",
    "quantize",
    "dequantize",
    "residual",
    "estimate_rate",
    "bits_per_pixel",
    "encode_latent",
    "decode_latent",
    "section_info",
]


@dataclass(frozen=True)
class QuantizedLatent:
    """Flat integer symbols plus the shape and bin width to invert them."""

    shape: tuple[int, ...]
    symbols: np.ndarray
    step: float

    def __post_init__(self):
        symbols = np.asarray(self.symbols, dtype=np.int32).ravel()
        if symbols.size != int(np.prod(self.shape, dtype=np.int64)):
            raise ShapeMismatchError(
                f"{symbols.size} symbols do not fill shape {self.shape}"
            )
        object.__setattr__(self, "shape", tuple(int(d) for d in self.shape))
        object.__setattr__(self, "symbols", symbols)


def quantize(z: np.ndarray, step: float) -> QuantizedLatent:
    """Uniform scalar quantization, rounding halves away from zero.

    Symbols are clipped to the 16-bit alphabet, so inputs beyond
    step * 2**15 saturate.
    """
    if step <= 0:
        raise InvalidRangeError(f"quantization step must be positive, got {step}")
    z = np.asarray(z, dtype=np.float64)
    scaled = z / step
    symbols = np.sign(scaled) * np.floor(np.abs(scaled) + 0.5)
    symbols = np.clip(symbols, SYMBOL_MIN, SYMBOL_MAX)
    return QuantizedLatent(shape=z.shape, symbols=symbols.astype(np.int32), step=float(step))


def dequantize(q: QuantizedLatent) -> np.ndarray:
    """Bin centers: symbols * step, reshaped to the original shape."""
    return (q.symbols.astype(np.float64) * q.step).reshape(q.shape)


def residual(z0: np.ndarray, zc: np.ndarray) -> np.ndarray:
    """Elementwise compressed-minus-clean difference."""
    z0 = np.asarray(z0, dtype=np.float64)
    zc = np.asarray(zc, dtype=np.float64)
    if z0.shape != zc.shape:
        raise ShapeMismatchError(f"z0 {z0.shape} vs zc {zc.shape}")
    return zc - z0


def estimate_rate(q: QuantizedLatent, model: EntropyModel) -> float:
    """Ideal total code length in bits: sum of -log2 p(symbol)."""
    if q.symbols.size == 0:
        return 0.0
    return float(model.symbol_bits(q.symbols).sum())


def bits_per_pixel(bits: float, pixel_count: int) -> float:
    """Express a bit total per pixel for a nominal pixel count."""
    if pixel_count <= 0:
        raise InvalidRangeError(f"pixel count must be positive, got {pixel_count}")
    return bits / pixel_count


def encode_latent(q: QuantizedLatent, model: EntropyModel) -> bytes:
    """Entropy-code the symbols into a self-checking byte section."""
    idx = model.to_indices(q.symbols)
    coded = _rc_encode(idx, model.cum) if idx.size else b""
    if model.escape_slot is not None:
        escaped = q.symbols[idx == model.escape_slot]
    else:
        escaped = np.empty(0, dtype=np.int32)

    head = struct.pack("<IB", q.symbols.size, KIND_IDS[model.kind])
    params = np.asarray(model.params(), dtype="<f8").tobytes()
    tail = (
        struct.pack("<I", len(coded))
        + coded
        + struct.pack("<I", escaped.size)
        + escaped.astype("<i2").tobytes()
    )
    crc = zlib.crc32(head + params + tail) & 0xFFFFFFFF
    return head + params + struct.pack("<I", crc) + tail


def _take(b: bytes, pos: int, size: int) -> tuple[bytes, int]:
    if pos + size > len(b):
        raise DecodeError("latent section truncated")
    return b[pos : pos + size], pos + size


def section_info(b: bytes, offset: int = 0) -> dict:
    """Framing facts about an encoded latent section (no entropy decode).

    ``payload_bits`` counts the data-carrying bytes (range-coded block plus
    raw escape values); model parameters and framing are excluded. ``length``
    is the section's total byte span starting at ``offset``.
    """
    raw, pos = _take(b, offset, 5)
    count, kind_id = struct.unpack("<IB", raw)
    if kind_id not in KIND_FROM_ID:
        raise DecodeError(f"unknown entropy model kind id {kind_id}")
    kind = KIND_FROM_ID[kind_id]
    if kind == "table":
        raw, _ = _take(b, pos, 16)
        n_params = 2 + int(struct.unpack("<2d", raw)[1])
    else:
        n_params = 2
    pos += 8 * n_params + 4  # params + checksum
    raw, pos = _take(b, pos, 4)
    n_coded = struct.unpack("<I", raw)[0]
    pos += n_coded
    raw, pos = _take(b, pos, 4)
    n_escape = struct.unpack("<I", raw)[0]
    pos += 2 * n_escape
    if pos > len(b):
        raise DecodeError("latent section truncated")
    return {
        "symbol_count": count,
        "kind": kind,
        "coded_bytes": n_coded,
        "escape_count": n_escape,
        "payload_bits": 8 * (n_coded + 2 * n_escape),
        "length": pos - offset,
    }


def decode_latent(
    b: bytes,
    model: EntropyModel | None,
    shape: tuple[int, ...],
    step: float,
) -> QuantizedLatent:
    """Invert encode_latent; checksum and length failures raise loudly.

    ``model`` may be None, in which case it is rebuilt from the embedded
    parameters; when given it must match the embedded parameters exactly.
    """
    raw, pos = _take(b, 0, 5)
    count, kind_id = struct.unpack("<IB", raw)
    if kind_id not in KIND_FROM_ID:
        raise DecodeError(f"unknown entropy model kind id {kind_id}")
    kind = KIND_FROM_ID[kind_id]

    if kind == "table":
        raw, _ = _take(b, pos, 16)
        n_params = 2 + int(struct.unpack("<2d", raw)[1])
    else:
        n_params = 2
    raw, pos = _take(b, pos, 8 * n_params)
    params = list(np.frombuffer(raw, dtype="<f8"))

    raw, pos = _take(b, pos, 4)
    crc_stored = struct.unpack("<I", raw)[0]
    crc_actual = zlib.crc32(b[: pos - 4] + b[pos:]) & 0xFFFFFFFF
    if crc_actual != crc_stored:
        raise ChecksumError(
            f"latent section checksum mismatch "
            f"(stored {crc_stored:#010x}, actual {crc_actual:#010x})"
        )

    embedded = EntropyModel.from_params(kind, params)
    if model is None:
        model = embedded
    elif model.kind != kind or model.params() != embedded.params():
        raise DecodeError("supplied entropy model disagrees with the stream")

    raw, pos = _take(b, pos, 4)
    n_coded = struct.unpack("<I", raw)[0]
    coded, pos = _take(b, pos, n_coded)
    raw, pos = _take(b, pos, 4)
    n_escape = struct.unpack("<I", raw)[0]
    raw, pos = _take(b, pos, 2 * n_escape)
    escapes = np.frombuffer(raw, dtype="<i2").astype(np.int32)
    if pos != len(b):
        raise DecodeError(f"{len(b) - pos} trailing bytes after latent section")

    if count:
        idx = _rc_decode(coded, count, model.cum).astype(np.int64)
    else:
        idx = np.empty(0, dtype=np.int64)
    symbols = (idx + model.window_lo).astype(np.int32)
    if model.escape_slot is not None:
        esc_positions = np.flatnonzero(idx == model.escape_slot)
        if esc_positions.size != n_escape:
            raise DecodeError(
                f"escape count mismatch: stream carries {n_escape}, "
                f"decoded {esc_positions.size}"
            )
        symbols[esc_positions] = escapes
    elif n_escape:
        raise DecodeError("escape values present for a closed-alphabet model")

    expected = int(np.prod(shape, dtype=np.int64))
    if expected != count:
        raise DecodeError(f"shape {shape} needs {expected} symbols, stream has {count}")
    return QuantizedLatent(shape=tuple(shape), symbols=symbols, step=float(step))
