"""Range coder backend selection.

The compiled kernel is preferred when importable; otherwise the pure-Python
twin takes over transparently. ``RESIDIFF_RANGECODER=python|compiled`` forces
a backend (used by the parity tests and the benchmark).
"""

from __future__ import annotations

import os

import numpy as np

from . import rc_py

TOTAL = rc_py.TOTAL

_forced = os.environ.get("RESIDIFF_RANGECODER", "").strip().lower()

_compiled = None
if _forced != "python":
    try:
        from . import _rc as _compiled  # type: ignore[attr-defined]
    except ImportError:
        _compiled = None
if _forced == "compiled" and _compiled is None:
    raise ImportError(
        "RESIDIFF_RANGECODER=compiled but the extension is not built"
    )

BACKEND = "compiled" if _compiled is not None else "python"


def encode(indices: np.ndarray, cum: np.ndarray) -> bytes:
    """Encode alphabet indices (uint32) against cumulative frequencies."""
    if _compiled is not None:
        return _compiled.encode_block(
            np.ascontiguousarray(indices, dtype=np.uint32),
            np.ascontiguousarray(cum, dtype=np.uint32),
        )
    return rc_py.encode_block(np.asarray(indices).tolist(), cum)


def decode(data: bytes, count: int, cum: np.ndarray) -> np.ndarray:
    """Decode ``count`` alphabet indices from a coded byte stream."""
    if _compiled is not None:
        out = np.empty(count, dtype=np.uint32)
        _compiled.decode_block(
            data, count, np.ascontiguousarray(cum, dtype=np.uint32), out
        )
        return out
    return np.asarray(rc_py.decode_block(data, count, cum), dtype=np.uint32)
