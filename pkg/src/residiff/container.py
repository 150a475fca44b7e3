"""Bitstream container binding the latent and text payloads.

Layout, little-endian throughout:

    magic "RSLC" | version u8 (=1) | flags u8 | schedule_id u8 | T u16 |
    endpoint u16 | rank u8 | dims u16 x rank | quant_step f64 |
    latent section | text section (present when flags bit 1 is set)

Flag bit 0 carries the sampling mode (stochastic when set), bit 1 marks a
text section. The latent section is internally framed; the text section runs
to the end of the stream. Each failure mode (magic, version, truncation,
checksum) raises its own error class with a stable code for the CLI.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .codec import section_info
from .errors import (
    BadMagicError,
    BadVersionError,
    InvalidRangeError,
    TruncatedError,
)
from .semantic import text_payload_bits

MAGIC = b"RSLC"
VERSION = 1

_FLAG_ETA = 0x01
_FLAG_TEXT = 0x02

_FIXED_HEAD = struct.Struct("<4sBBBHHB")


@dataclass(frozen=True)
class Container:
    schedule_id: int
    total_steps: int
    endpoint_step: int
    shape: tuple[int, ...]
    quant_step: float
    eta: int
    latent_section: bytes
    text_section: bytes | None = None

    def rates(self) -> dict:
        """Payload bit budget: latent bits, text bits, and their sum."""
        latent_bits = section_info(self.latent_section)["payload_bits"]
        text_bits = (
            text_payload_bits(self.text_section) if self.text_section is not None else 0
        )
        return {
            "latent_bits": latent_bits,
            "text_bits": text_bits,
            "total_bits": latent_bits + text_bits,
        }


def write_container(c: Container) -> bytes:
    """Serialize; every field is validated against its wire width."""
    if not 0 <= c.schedule_id <= 0xFF:
        raise InvalidRangeError(f"schedule id {c.schedule_id} outside u8")
    if not 1 <= c.total_steps <= 0xFFFF:
        raise InvalidRangeError(f"total steps {c.total_steps} outside u16")
    if not 1 <= c.endpoint_step <= c.total_steps:
        raise InvalidRangeError(
            f"endpoint {c.endpoint_step} outside 1..{c.total_steps}"
        )
    if len(c.shape) > 0xFF or any(not 0 <= d <= 0xFFFF for d in c.shape):
        raise InvalidRangeError(f"shape {c.shape} does not fit u8 rank / u16 dims")
    if c.eta not in (0, 1):
        raise InvalidRangeError(f"eta flag must be 0 or 1, got {c.eta}")
    flags = (_FLAG_ETA if c.eta else 0) | (_FLAG_TEXT if c.text_section is not None else 0)
    head = _FIXED_HEAD.pack(
        MAGIC, VERSION, flags, c.schedule_id, c.total_steps, c.endpoint_step, len(c.shape)
    )
    head += struct.pack(f"<{len(c.shape)}H", *c.shape)
    head += struct.pack("<d", c.quant_step)
    out = head + c.latent_section
    if c.text_section is not None:
        out += c.text_section
    return out


def read_container(b: bytes) -> Container:
    """Parse and validate; the returned fields round trip bit-exactly."""
    if len(b) < 4:
        raise TruncatedError(f"stream holds {len(b)} bytes, magic needs 4")
    if b[:4] != MAGIC:
        raise BadMagicError(f"bad magic {b[:4]!r}")
    if len(b) < _FIXED_HEAD.size:
        raise TruncatedError("stream ends inside the fixed header")
    _, version, flags, schedule_id, total_steps, endpoint, rank = _FIXED_HEAD.unpack_from(b)
    if version != VERSION:
        raise BadVersionError(f"unsupported container version {version}")
    pos = _FIXED_HEAD.size
    if len(b) < pos + 2 * rank + 8:
        raise TruncatedError("stream ends inside the shape header")
    shape = struct.unpack_from(f"<{rank}H", b, pos)
    pos += 2 * rank
    (quant_step,) = struct.unpack_from("<d", b, pos)
    pos += 8

    try:
        latent_len = section_info(b, pos)["length"]
    except Exception as exc:
        raise TruncatedError(f"latent section unreadable: {exc}") from exc
    latent_section = b[pos : pos + latent_len]
    pos += latent_len

    text_section = None
    if flags & _FLAG_TEXT:
        if pos >= len(b):
            raise TruncatedError("text flag set but no text section present")
        text_section = b[pos:]
    elif pos != len(b):
        raise TruncatedError(f"{len(b) - pos} unexpected trailing bytes")

    return Container(
        schedule_id=schedule_id,
        total_steps=total_steps,
        endpoint_step=endpoint,
        shape=tuple(shape),
        quant_step=quant_step,
        eta=1 if flags & _FLAG_ETA else 0,
        latent_section=latent_section,
        text_section=text_section,
    )


def write_latent_file(z: np.ndarray) -> bytes:
    """Latent file bytes: u32 rank, u32 dims, then f64 data (little-endian)."""
    z = np.asarray(z, dtype=np.float64)
    head = struct.pack("<I", z.ndim) + struct.pack(f"<{z.ndim}I", *z.shape)
    return head + z.astype("<f8").tobytes()


def read_latent_file(b: bytes) -> np.ndarray:
    if len(b) < 4:
        raise TruncatedError("latent file shorter than its rank field")
    (rank,) = struct.unpack_from("<I", b)
    if len(b) < 4 + 4 * rank:
        raise TruncatedError("latent file ends inside its shape header")
    shape = struct.unpack_from(f"<{rank}I", b, 4)
    count = int(np.prod(shape, dtype=np.int64)) if rank else 1
    body = b[4 + 4 * rank :]
    if len(body) != 8 * count:
        raise TruncatedError(
            f"latent file body holds {len(body)} bytes, shape {shape} needs {8 * count}"
        )
    return np.frombuffer(body, dtype="<f8").reshape(shape).copy()
